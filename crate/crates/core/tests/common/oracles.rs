//! Brute-force references for the integration tests. Everything here is
//! recomputed from the public fields of the domain types; none of it calls
//! into the library's own math.

use num_complex::Complex64;
use semnoma::modem::{LayerStack, ModemModel, ModemPair, TrainBatch};
use semnoma::quant::QuantizerSpec;
use semnoma::regions::{CurveKind, RegionCurve, RegionQuery, RegionUsers, Scheme, UserModel};
use semnoma::sic::QamMap;

pub const MAX_COMPOSITE_BITS: u32 = 12;
pub const FD_STEP: f64 = 1e-5;
pub const GRID_FACTOR: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub enum OracleError {
    TooLarge { bits: u32 },
}

/// `C[i] = (i + p_z) / f_s` recomputed from `(m, s, d)`.
pub fn constellation(spec: QuantizerSpec) -> Vec<f64> {
    let levels = 1u64 << spec.m;
    let fs = (levels - 1) as f64 / (2.0 * spec.s);
    let pz = ((-spec.s + spec.d) * fs).round();
    (0..levels).map(|i| (i as f64 + pz) / fs).collect()
}

/// Where a user's symbol alphabet comes from.
pub enum Alphabet<'a> {
    Model(&'a ModemModel),
    Qam(&'a QamMap),
}

impl Alphabet<'_> {
    fn bits(&self) -> u32 {
        match self {
            Alphabet::Model(m) => m.quantizer().spec().m,
            Alphabet::Qam(q) => q.points().len().trailing_zeros(),
        }
    }

    fn points(&self) -> Vec<Complex64> {
        match self {
            Alphabet::Model(m) => {
                let c = constellation(m.quantizer().spec());
                let raw: Vec<Complex64> = c
                    .iter()
                    .map(|&v| {
                        Complex64::new(
                            m.modulator.weight[0] * v + m.modulator.bias[0],
                            m.modulator.weight[1] * v + m.modulator.bias[1],
                        )
                    })
                    .collect();
                let p = raw.iter().map(|z| z.re * z.re + z.im * z.im).sum::<f64>() / raw.len() as f64;
                raw.into_iter().map(|z| z / p.sqrt()).collect()
            }
            Alphabet::Qam(q) => q.points().to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeRow {
    pub near: u32,
    pub far: u32,
    pub symbol: Complex64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnumerationTable {
    pub rows: Vec<CompositeRow>,
    pub min_distance: f64,
    pub injective: bool,
}

/// Every `(near, far)` index pair superposed with `sqrt(rho)` amplitudes.
pub fn enumerate_composites(
    near: Alphabet,
    far: Alphabet,
    rho_near: f64,
    rho_far: f64,
) -> Result<EnumerationTable, OracleError> {
    let bits = near.bits() + far.bits();
    if bits > MAX_COMPOSITE_BITS {
        return Err(OracleError::TooLarge { bits });
    }
    let (pn, pf) = (near.points(), far.points());
    let mut rows = Vec::with_capacity(pn.len() * pf.len());
    for (i, a) in pn.iter().enumerate() {
        for (j, b) in pf.iter().enumerate() {
            rows.push(CompositeRow {
                near: i as u32,
                far: j as u32,
                symbol: a * rho_near.sqrt() + b * rho_far.sqrt(),
            });
        }
    }
    let mut min_distance = f64::INFINITY;
    for x in 0..rows.len() {
        for y in x + 1..rows.len() {
            min_distance = min_distance.min((rows[x].symbol - rows[y].symbol).norm());
        }
    }
    Ok(EnumerationTable {
        rows,
        min_distance,
        injective: min_distance > 1e-9,
    })
}

/// Independent forward pass: ReLU on hidden layers, linear output.
pub fn stack_forward(stack: &LayerStack, input: &[f64]) -> Vec<f64> {
    let n = stack.layers.len();
    let mut a = input.to_vec();
    for (li, l) in stack.layers.iter().enumerate() {
        let mut next = vec![0.0; l.out_dim];
        for o in 0..l.out_dim {
            let mut z = l.bias[o];
            for i in 0..l.in_dim {
                z += l.weights[o * l.in_dim + i] * a[i];
            }
            next[o] = if li + 1 < n { z.max(0.0) } else { z };
        }
        a = next;
    }
    a
}

fn stack_len(stack: &LayerStack) -> usize {
    stack.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
}

fn stack_param(stack: &mut LayerStack, mut k: usize) -> &mut f64 {
    for l in &mut stack.layers {
        if k < l.weights.len() {
            return &mut l.weights[k];
        }
        k -= l.weights.len();
        if k < l.bias.len() {
            return &mut l.bias[k];
        }
        k -= l.bias.len();
    }
    panic!("parameter index out of range")
}

fn central<T: Clone>(base: &T, k: usize, param: impl Fn(&mut T, usize) -> &mut f64, f: impl Fn(&T) -> f64) -> f64 {
    let mut t = base.clone();
    *param(&mut t, k) += FD_STEP;
    let up = f(&t);
    let mut t = base.clone();
    *param(&mut t, k) -= FD_STEP;
    let down = f(&t);
    (up - down) / (2.0 * FD_STEP)
}

/// Numeric gradient of `sum_k upstream[k] . f(inputs[k])` with respect to
/// every parameter, weights then bias for each layer.
pub fn fd_gradient(stack: &LayerStack, inputs: &[Vec<f64>], upstream: &[Vec<f64>]) -> Vec<f64> {
    let objective = |s: &LayerStack| -> f64 {
        inputs
            .iter()
            .zip(upstream)
            .map(|(x, u)| stack_forward(s, x).iter().zip(u).map(|(a, b)| a * b).sum::<f64>())
            .sum()
    };
    (0..stack_len(stack)).map(|k| central(stack, k, stack_param, objective)).collect()
}

/// Numeric gradient with respect to one input vector.
pub fn fd_input_gradient(stack: &LayerStack, input: &[f64], upstream: &[f64]) -> Vec<f64> {
    (0..input.len())
        .map(|i| {
            let mut up = input.to_vec();
            let mut down = input.to_vec();
            up[i] += FD_STEP;
            down[i] -= FD_STEP;
            let f = |x: &[f64]| stack_forward(stack, x).iter().zip(upstream).map(|(a, b)| a * b).sum::<f64>();
            (f(&up) - f(&down)) / (2.0 * FD_STEP)
        })
        .collect()
}

fn user_points(m: &ModemModel, v: f64) -> (Complex64, f64) {
    let c = constellation(m.quantizer().spec());
    let p = c
        .iter()
        .map(|&x| {
            let re = m.modulator.weight[0] * x + m.modulator.bias[0];
            let im = m.modulator.weight[1] * x + m.modulator.bias[1];
            re * re + im * im
        })
        .sum::<f64>()
        / c.len() as f64;
    let s = Complex64::new(
        m.modulator.weight[0] * v + m.modulator.bias[0],
        m.modulator.weight[1] * v + m.modulator.bias[1],
    );
    (s, p)
}

/// The training objective `L_near + L_far` rebuilt from scratch. The power
/// normalization uses the live modulator parameters.
pub fn pair_objective(pair: &ModemPair, batch: &TrainBatch, amp_near: f64, amp_far: f64) -> f64 {
    let mut total = 0.0;
    for k in 0..batch.v_near.len() {
        let (vn, vf) = (batch.v_near[k], batch.v_far[k]);
        let (sn, pn) = user_points(&pair.near, vn);
        let (sf, pf) = user_points(&pair.far, vf);
        let x = sn * (amp_near / pn.sqrt()) + sf * (amp_far / pf.sqrt());
        let yn = batch.gain_near * x + batch.noise_near[k];
        let yf = batch.gain_far * x + batch.noise_far[k];
        let on = stack_forward(&pair.near.demodulator, &[yn.re, yn.im]);
        let of = stack_forward(&pair.far.demodulator, &[yf.re, yf.im]);
        let tn = vn / batch.unit_near;
        let tf = vf / batch.unit_far;
        total += (on[0] - tn).powi(2) + (on[1] - tf).powi(2) + (of[0] - tf).powi(2);
    }
    total / batch.v_near.len() as f64
}

fn model_len(m: &ModemModel) -> usize {
    4 + stack_len(&m.demodulator)
}

fn model_param(m: &mut ModemModel, k: usize) -> &mut f64 {
    match k {
        0 | 1 => &mut m.modulator.weight[k],
        2 | 3 => &mut m.modulator.bias[k - 2],
        _ => stack_param(&mut m.demodulator, k - 4),
    }
}

fn pair_param(p: &mut ModemPair, k: usize) -> &mut f64 {
    let n = model_len(&p.near);
    if k < n {
        model_param(&mut p.near, k)
    } else {
        model_param(&mut p.far, k - n)
    }
}

/// Numeric gradient of [`pair_objective`] in the pair's parameter order:
/// near modulator weight, bias, near demodulator, then the far user.
pub fn fd_pair_gradient(pair: &ModemPair, batch: &TrainBatch, amp_near: f64, amp_far: f64) -> Vec<f64> {
    let total = model_len(&pair.near) + model_len(&pair.far);
    let objective = |p: &ModemPair| pair_objective(p, batch, amp_near, amp_far);
    (0..total).map(|k| central(pair, k, pair_param, objective)).collect()
}

/// Largest `|a - n|` over the group divided by the larger of the two
/// group maxima.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let diff = analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs()).fold(0.0, f64::max);
    let scale = analytic
        .iter()
        .chain(numeric)
        .map(|v| v.abs())
        .fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn xi(u: &UserModel, gamma: f64) -> f64 {
    let a = &u.accuracy;
    a.a1 + (a.a2 - a.a1) / (1.0 + (-(a.c1 * gamma + a.c2)).exp())
}

fn ceiling(u: &UserModel, w: f64) -> f64 {
    let p = &u.profile;
    let per = p.k_symbols_per_word.or(p.compression_ratio).unwrap();
    w * p.info_per_item / (per * p.length_per_item)
}

/// Smallest `gamma >= 0` with `xi(gamma) >= target`, by bisection.
pub fn snr_for(u: &UserModel, target: f64) -> Option<f64> {
    if xi(u, 0.0) >= target {
        return Some(0.0);
    }
    let mut hi = 1.0;
    while xi(u, hi) < target {
        hi *= 2.0;
        if hi > 1e12 {
            return None;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if xi(u, mid) >= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

fn lin(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Dense search for the best NOMA far rate at near rate `gamma_n`, over the
/// near power factor on a grid of `n` points.
pub fn noma_far_rate(q: &RegionQuery, users: &RegionUsers, gamma_n: f64, n: usize) -> Option<f64> {
    let (gn, gf) = (lin(q.scenario.gain_near_db), lin(q.scenario.gain_far_db));
    let w = q.scenario.bandwidth_w;
    let t_near = snr_for(&users.near, q.xi_req_near)?.max(snr_for(&users.near, gamma_n / ceiling(&users.near, w))?);
    let t_far = snr_for(&users.far, q.xi_req_far)?;
    let rho_min = t_near / gn;
    let mut best: Option<f64> = None;
    for i in 0..=n {
        let rho_n = rho_min + (1.0 - rho_min) * i as f64 / n as f64;
        if rho_n > 1.0 {
            break;
        }
        let rho_f = 1.0 - rho_n;
        let sinr = rho_f * gf / (rho_n * gf + 1.0);
        if sinr < t_far * (1.0 - 1e-12) {
            continue;
        }
        let r = ceiling(&users.far, w) * xi(&users.far, sinr);
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    best
}

/// Dense search for the best OMA far rate at near rate `gamma_n`, over the
/// near bandwidth fraction on a grid of `n` points in `(0, 1)`.
pub fn oma_far_rate(q: &RegionQuery, users: &RegionUsers, gamma_n: f64, n: usize) -> Option<f64> {
    let (gn, gf) = (lin(q.scenario.gain_near_db), lin(q.scenario.gain_far_db));
    let w = q.scenario.bandwidth_w;
    let t_acc_n = snr_for(&users.near, q.xi_req_near)?;
    let t_far = snr_for(&users.far, q.xi_req_far)?;
    let mut best: Option<f64> = None;
    for j in 1..n {
        let x = j as f64 / n as f64;
        let need = gamma_n / (ceiling(&users.near, w) * x);
        let Some(t_rate) = snr_for(&users.near, need) else { continue };
        let rho_n = t_rate.max(t_acc_n) * x / gn;
        if rho_n > 1.0 {
            continue;
        }
        let snr_f = (1.0 - rho_n) * gf / (1.0 - x);
        if snr_f < t_far * (1.0 - 1e-12) {
            continue;
        }
        let r = ceiling(&users.far, w) * (1.0 - x) * xi(&users.far, snr_f);
        best = Some(best.map_or(r, |b: f64| b.max(r)));
    }
    best
}

/// Rate-region frontier sampled at `near_rates`, searched on a grid
/// `GRID_FACTOR` times finer than the query's.
pub fn dense_region_search(q: &RegionQuery, users: &RegionUsers, scheme: Scheme, near_rates: &[f64]) -> RegionCurve {
    let n = q.grid_points * GRID_FACTOR;
    let mut curve = RegionCurve {
        scheme,
        kind: CurveKind::Rate,
        points: Vec::new(),
        infeasible_x: Vec::new(),
        feasible: false,
    };
    for &g in near_rates {
        let r = match scheme {
            Scheme::Noma => noma_far_rate(q, users, g, n),
            Scheme::Oma => oma_far_rate(q, users, g, n),
        };
        match r {
            Some(r) => curve.points.push((g, r)),
            None => curve.infeasible_x.push(g),
        }
    }
    curve.feasible = !curve.points.is_empty();
    curve
}

/// Dense minimum total power factor for NOMA under the given requirements.
pub fn noma_min_power_factor(q: &RegionQuery, users: &RegionUsers, xi_near: f64, n: usize) -> Option<f64> {
    let (gn, gf) = (lin(q.scenario.gain_near_db), lin(q.scenario.gain_far_db));
    let w = q.scenario.bandwidth_w;
    let t_n = snr_for(&users.near, xi_near)?.max(snr_for(&users.near, q.rate_req_near / ceiling(&users.near, w))?);
    let t_f = snr_for(&users.far, q.xi_req_far)?.max(snr_for(&users.far, q.rate_req_far / ceiling(&users.far, w))?);
    let mut best: Option<f64> = None;
    for i in 0..=n {
        let rho_n = i as f64 / n as f64;
        if rho_n * gn < t_n * (1.0 - 1e-12) {
            continue;
        }
        // smallest far power on a dense grid
        let rho_f_exact = t_f * (rho_n + 1.0 / gf);
        let rho_f = (rho_f_exact * n as f64).ceil() / n as f64;
        if rho_f > 1.0 || rho_n + rho_f > 1.0 + 1e-12 {
            continue;
        }
        best = Some(best.map_or(rho_n + rho_f, |b: f64| b.min(rho_n + rho_f)));
    }
    best
}
