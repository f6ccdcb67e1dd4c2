//! Semantic rate regions and minimum-power regions for NOMA and OMA, by
//! exhaustive one-dimensional search.
//!
//! Gains are `P_max |h|^2 / (sigma^2 W)`, the full-band full-power SNR of
//! each user. With a bandwidth fraction `x` and power factor `rho`, an OMA
//! user sees `rho g / x`; NOMA users share the band and the far user treats
//! the near signal as noise.

use serde::{Deserialize, Serialize};

use crate::channel::db_to_linear;
use crate::error::{invalid, Result};
use crate::link::LinkScenario;
use crate::srate::{AccuracyModel, SourceProfile};

pub const DEFAULT_GRID_POINTS: usize = 2048;

/// Slack allowed when re-checking constraints at emitted points.
pub const CONSTRAINT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserModel {
    pub profile: SourceProfile,
    pub accuracy: AccuracyModel,
}

impl UserModel {
    /// Rate at accuracy 1 over bandwidth `w`.
    pub fn ceiling(&self, w: f64) -> f64 {
        self.profile.rate_ceiling(w)
    }

    pub fn rate(&self, w: f64, gamma: f64) -> f64 {
        self.ceiling(w) * self.accuracy.eval(gamma)
    }

    /// Linear SNR needed for accuracy `target`; 0 if met with no power.
    pub fn snr_for_accuracy(&self, target: f64) -> Option<f64> {
        self.accuracy.required_snr(target)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionUsers {
    pub near: UserModel,
    pub far: UserModel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionQuery {
    pub scenario: LinkScenario,
    pub xi_req_near: f64,
    pub xi_req_far: f64,
    /// Absolute semantic rates, units per second.
    pub rate_req_near: f64,
    pub rate_req_far: f64,
    pub grid_points: usize,
}

impl RegionQuery {
    pub fn validate(&self) -> Result<()> {
        self.scenario.validate_ordered()?;
        if self.grid_points < 2 {
            return Err(invalid("grid_points", "must be >= 2"));
        }
        for (name, v) in [("rate_req_near", self.rate_req_near), ("rate_req_far", self.rate_req_far)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, "must be finite and >= 0"));
            }
        }
        for (name, v) in [("xi_req_near", self.xi_req_near), ("xi_req_far", self.xi_req_far)] {
            if !v.is_finite() {
                return Err(invalid(name, "must be finite"));
            }
        }
        Ok(())
    }

    fn gains(&self) -> (f64, f64) {
        (
            db_to_linear(self.scenario.gain_near_db),
            db_to_linear(self.scenario.gain_far_db),
        )
    }

    fn w(&self) -> f64 {
        self.scenario.bandwidth_w
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Noma,
    Oma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveKind {
    Rate,
    Power,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCurve {
    pub scheme: Scheme,
    pub kind: CurveKind,
    /// Feasible points sorted by x.
    pub points: Vec<(f64, f64)>,
    /// x values searched without a feasible solution.
    pub infeasible_x: Vec<f64>,
    pub feasible: bool,
}

impl RegionCurve {
    fn new(scheme: Scheme, kind: CurveKind) -> Self {
        Self {
            scheme,
            kind,
            points: Vec::new(),
            infeasible_x: Vec::new(),
            feasible: false,
        }
    }

    fn finish(mut self) -> Self {
        self.points.sort_by(|a, b| a.0.total_cmp(&b.0));
        self.feasible = !self.points.is_empty();
        self
    }

    pub fn dropped(&self) -> usize {
        self.infeasible_x.len()
    }
}

fn grid(lo: f64, hi: f64, n: usize) -> impl Iterator<Item = f64> {
    (0..n).map(move |i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
}

/// Far-user SNR with the near signal as interference.
fn far_sinr(rho_near: f64, rho_far: f64, g_far: f64) -> f64 {
    rho_far * g_far / (rho_near * g_far + 1.0)
}

/// Minimum far power factor meeting far SNR `t` when the near user takes
/// everything else.
pub fn noma_rho_far_min(t: f64, g_far: f64) -> f64 {
    t * (1.0 + 1.0 / g_far) / (1.0 + t)
}

/// Range of near rates for which the NOMA region is non-empty, with the
/// matching near power factors: `(gamma_lo, gamma_hi, rho_near_min, rho_far_min)`.
pub fn noma_rate_bounds(q: &RegionQuery, users: &RegionUsers) -> Option<(f64, f64, f64, f64)> {
    let (g_n, g_f) = q.gains();
    let t_f = users.far.snr_for_accuracy(q.xi_req_far)?;
    let t_n = users.near.snr_for_accuracy(q.xi_req_near)?;
    let rho_f_min = noma_rho_far_min(t_f, g_f);
    let rho_n_min = t_n / g_n;
    if rho_n_min + rho_f_min >= 1.0 {
        return None;
    }
    let lo = users.near.rate(q.w(), rho_n_min * g_n);
    let hi = users.near.rate(q.w(), (1.0 - rho_f_min) * g_n);
    Some((lo, hi, rho_n_min, rho_f_min))
}

/// Largest far rate NOMA delivers with near rate `gamma_n`, all power used.
pub fn noma_max_far_rate(q: &RegionQuery, users: &RegionUsers, gamma_n: f64) -> Option<f64> {
    let (lo, hi, rho_n_min, rho_f_min) = noma_rate_bounds(q, users)?;
    let slack = CONSTRAINT_SLACK * hi.abs().max(1.0);
    if gamma_n < lo - slack || gamma_n > hi + slack {
        return None;
    }
    let (g_n, g_f) = q.gains();
    let target = gamma_n / users.near.ceiling(q.w());
    let snr = if gamma_n >= hi { (1.0 - rho_f_min) * g_n } else { users.near.snr_for_accuracy(target)? };
    let rho_n = (snr / g_n).max(rho_n_min).min(1.0 - rho_f_min);
    let rho_f = 1.0 - rho_n;
    Some(users.far.rate(q.w(), far_sinr(rho_n, rho_f, g_f)))
}

pub fn noma_rate_region(q: &RegionQuery, users: &RegionUsers) -> Result<RegionCurve> {
    q.validate()?;
    let mut curve = RegionCurve::new(Scheme::Noma, CurveKind::Rate);
    let Some((lo, hi, _, _)) = noma_rate_bounds(q, users) else {
        return Ok(curve.finish());
    };
    for gn in grid(lo, hi, q.grid_points) {
        match noma_max_far_rate(q, users, gn) {
            Some(gf) => curve.points.push((gn, gf)),
            None => curve.infeasible_x.push(gn),
        }
    }
    Ok(curve.finish())
}

/// One OMA operating point: near bandwidth fraction, near power factor and
/// the resulting far rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmaPoint {
    pub bandwidth_fraction: f64,
    pub rho_near: f64,
    pub far_rate: f64,
}

/// Best far rate over a grid of near bandwidth fractions, each using the
/// least near power that meets the near rate and accuracy requirements.
pub fn oma_max_far_rate(q: &RegionQuery, users: &RegionUsers, gamma_n: f64, grid_points: usize) -> Option<OmaPoint> {
    let (g_n, g_f) = q.gains();
    let w = q.w();
    let t_acc_n = users.near.snr_for_accuracy(q.xi_req_near)?;
    let t_f = users.far.snr_for_accuracy(q.xi_req_far)?;
    let x_lo = gamma_n / users.near.ceiling(w);
    if !(x_lo < 1.0) {
        return None;
    }
    let mut best: Option<OmaPoint> = None;
    for j in 0..grid_points {
        let x = x_lo + (1.0 - x_lo) * j as f64 / grid_points as f64;
        if x <= 0.0 {
            continue;
        }
        let Some(t_rate) = users.near.snr_for_accuracy(gamma_n / (users.near.ceiling(w) * x)) else {
            continue;
        };
        let rho_low = t_rate.max(t_acc_n) * x / g_n;
        let rho_up = (1.0 - t_f * (1.0 - x) / g_f).min(1.0);
        if rho_low > 1.0 || rho_low > rho_up {
            continue;
        }
        let gf = users.far.rate(w * (1.0 - x), (1.0 - rho_low) * g_f / (1.0 - x));
        if best.is_none_or(|b| gf > b.far_rate) {
            best = Some(OmaPoint {
                bandwidth_fraction: x,
                rho_near: rho_low,
                far_rate: gf,
            });
        }
    }
    best
}

/// The OMA frontier over near rates in `(0, max]`, plus the two corners
/// where one user gets everything. A corner is kept only if the starved
/// user's zero-SNR accuracy still meets its requirement.
pub fn oma_rate_region(q: &RegionQuery, users: &RegionUsers) -> Result<RegionCurve> {
    q.validate()?;
    let (g_n, g_f) = q.gains();
    let w = q.w();
    let mut curve = RegionCurve::new(Scheme::Oma, CurveKind::Rate);
    let near_all = users.near.rate(w, g_n);
    let far_all = users.far.rate(w, g_f);
    let near_ok = users.near.accuracy.eval(g_n) >= q.xi_req_near;
    let far_ok = users.far.accuracy.eval(g_f) >= q.xi_req_far;
    if far_ok && users.near.accuracy.eval(0.0) >= q.xi_req_near {
        curve.points.push((0.0, far_all));
    }
    if near_ok && users.far.accuracy.eval(0.0) >= q.xi_req_far {
        curve.points.push((near_all, 0.0));
    }
    let n = q.grid_points;
    for i in 1..n {
        let gn = near_all * i as f64 / n as f64;
        match oma_max_far_rate(q, users, gn, q.grid_points) {
            Some(p) => curve.points.push((gn, p.far_rate)),
            None => curve.infeasible_x.push(gn),
        }
    }
    Ok(curve.finish())
}

/// Requirements for one power-region evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Requirements {
    pub xi_near: f64,
    pub xi_far: f64,
    pub rate_near: f64,
    pub rate_far: f64,
}

impl RegionQuery {
    pub fn requirements(&self) -> Requirements {
        Requirements {
            xi_near: self.xi_req_near,
            xi_far: self.xi_req_far,
            rate_near: self.rate_req_near,
            rate_far: self.rate_req_far,
        }
    }
}

/// Minimum total power `(rho_N + rho_F) P_max` for NOMA, searching the near
/// power factor over `[rho_N^min, 1]`.
pub fn noma_min_power(q: &RegionQuery, users: &RegionUsers, req: &Requirements) -> Option<f64> {
    let (g_n, g_f) = q.gains();
    let w = q.w();
    let t_n = users
        .near
        .snr_for_accuracy(req.xi_near)?
        .max(users.near.snr_for_accuracy(req.rate_near / users.near.ceiling(w))?);
    let t_f = users
        .far
        .snr_for_accuracy(req.xi_far)?
        .max(users.far.snr_for_accuracy(req.rate_far / users.far.ceiling(w))?);
    let rho_n_min = t_n / g_n;
    if rho_n_min > 1.0 {
        return None;
    }
    let mut best: Option<f64> = None;
    for rho_n in grid(rho_n_min, 1.0, q.grid_points) {
        let rho_f = t_f * (1.0 / g_f + rho_n);
        if rho_f <= 1.0 && rho_n + rho_f <= 1.0 + CONSTRAINT_SLACK {
            let total = rho_n + rho_f;
            best = Some(best.map_or(total, |b: f64| b.min(total)));
        }
    }
    best.map(|b| b * q.scenario.p_max)
}

/// Minimum total power for OMA, searching the near bandwidth fraction over
/// `[rate_near / ceiling_near, 1)`. The grid is fixed and filtered by the
/// lower bound, so tightening a requirement only removes candidates.
pub fn oma_min_power(q: &RegionQuery, users: &RegionUsers, req: &Requirements) -> Option<f64> {
    let (g_n, g_f) = q.gains();
    let w = q.w();
    let t_acc_n = users.near.snr_for_accuracy(req.xi_near)?;
    let t_acc_f = users.far.snr_for_accuracy(req.xi_far)?;
    let x_lo = req.rate_near / users.near.ceiling(w);
    if !(x_lo < 1.0) {
        return None;
    }
    let mut best: Option<f64> = None;
    for j in 1..q.grid_points {
        let x = j as f64 / q.grid_points as f64;
        if x < x_lo {
            continue;
        }
        let Some(t_rn) = users.near.snr_for_accuracy(req.rate_near / (users.near.ceiling(w) * x)) else {
            continue;
        };
        let Some(t_rf) = users.far.snr_for_accuracy(req.rate_far / (users.far.ceiling(w) * (1.0 - x))) else {
            continue;
        };
        let rho_n = t_rn.max(t_acc_n) * x / g_n;
        let rho_f = t_rf.max(t_acc_f) * (1.0 - x) / g_f;
        if rho_n <= 1.0 && rho_f <= 1.0 && rho_n + rho_f <= 1.0 + CONSTRAINT_SLACK {
            let total = rho_n + rho_f;
            best = Some(best.map_or(total, |b: f64| b.min(total)));
        }
    }
    best.map(|b| b * q.scenario.p_max)
}

fn power_region(
    q: &RegionQuery,
    users: &RegionUsers,
    xi_near_sweep: &[f64],
    scheme: Scheme,
) -> Result<RegionCurve> {
    q.validate()?;
    let mut curve = RegionCurve::new(scheme, CurveKind::Power);
    for &xi in xi_near_sweep {
        let req = Requirements {
            xi_near: xi,
            ..q.requirements()
        };
        let p = match scheme {
            Scheme::Noma => noma_min_power(q, users, &req),
            Scheme::Oma => oma_min_power(q, users, &req),
        };
        match p {
            Some(p) => curve.points.push((xi, p)),
            None => curve.infeasible_x.push(xi),
        }
    }
    Ok(curve.finish())
}

/// Minimum NOMA power as the near accuracy requirement sweeps `xi_near_sweep`.
pub fn noma_power_region(q: &RegionQuery, users: &RegionUsers, xi_near_sweep: &[f64]) -> Result<RegionCurve> {
    power_region(q, users, xi_near_sweep, Scheme::Noma)
}

pub fn oma_power_region(q: &RegionQuery, users: &RegionUsers, xi_near_sweep: &[f64]) -> Result<RegionCurve> {
    power_region(q, users, xi_near_sweep, Scheme::Oma)
}
