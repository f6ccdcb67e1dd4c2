//! End-to-end two-user downlink: quantize, modulate, superpose, fade,
//! equalize, detect, and score.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{db_to_linear, linear_to_db, ChannelKind, ChannelSpec};
use crate::error::{invalid, Error, Result};
use crate::modem::ModemPair;
use crate::quant::{FeatureVector, QuantizerParams};
use crate::rng::SimRng;
use crate::sic::{sic_detect_amplitudes, QamMap};

/// Tolerance on `rho_near + rho_far == 1`.
pub const POWER_SPLIT_TOLERANCE: f64 = 1e-9;

/// How power factors weight the unit-power user streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SuperpositionRule {
    /// `sqrt(rho)`: the composite has unit power and received powers are linear in rho.
    #[default]
    Amplitude,
    /// `rho` used directly as the amplitude weight.
    Literal,
}

impl SuperpositionRule {
    pub fn amplitudes(self, rho_near: f64, rho_far: f64) -> (f64, f64) {
        match self {
            SuperpositionRule::Amplitude => (rho_near.sqrt(), rho_far.sqrt()),
            SuperpositionRule::Literal => (rho_near, rho_far),
        }
    }
}

pub fn check_power_split(rho_near: f64, rho_far: f64) -> Result<()> {
    for (name, r) in [("rho_near", rho_near), ("rho_far", rho_far)] {
        if !(0.0..=1.0).contains(&r) {
            return Err(invalid(name, format!("{r} is outside [0, 1]")));
        }
    }
    if (rho_near + rho_far - 1.0).abs() > POWER_SPLIT_TOLERANCE {
        return Err(invalid(
            "rho_near + rho_far",
            format!("{} + {} must equal 1", rho_near, rho_far),
        ));
    }
    Ok(())
}

pub fn superpose(
    s_near: &[Complex64],
    s_far: &[Complex64],
    rho_near: f64,
    rho_far: f64,
    rule: SuperpositionRule,
) -> Result<Vec<Complex64>> {
    if s_near.len() != s_far.len() {
        return Err(Error::LengthMismatch {
            left: s_near.len(),
            right: s_far.len(),
        });
    }
    check_power_split(rho_near, rho_far)?;
    let (a, b) = rule.amplitudes(rho_near, rho_far);
    Ok(s_near.iter().zip(s_far).map(|(&n, &f)| n * a + f * b).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkScenario {
    /// Watts.
    pub p_max: f64,
    /// Hz.
    pub bandwidth_w: f64,
    pub rho_near: f64,
    pub rho_far: f64,
    /// `P_max |h|^2 / (sigma^2 W)` in dB; `+inf` is noiseless.
    pub gain_near_db: f64,
    pub gain_far_db: f64,
    pub m_near: u32,
    pub m_far: u32,
}

impl LinkScenario {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_max > 0.0 && self.p_max.is_finite()) {
            return Err(invalid("p_max", "must be finite and > 0"));
        }
        if !(self.bandwidth_w > 0.0 && self.bandwidth_w.is_finite()) {
            return Err(invalid("bandwidth_w", "must be finite and > 0"));
        }
        check_power_split(self.rho_near, self.rho_far)?;
        for (name, g) in [("gain_near_db", self.gain_near_db), ("gain_far_db", self.gain_far_db)] {
            if g.is_nan() || g == f64::NEG_INFINITY {
                return Err(invalid(name, "must be a number or +inf"));
            }
        }
        if self.m_near < 1 || self.m_far < 1 {
            return Err(Error::InvalidOrder(self.m_near.min(self.m_far)));
        }
        Ok(())
    }

    /// Validation plus the near/far ordering `gain_near_db >= gain_far_db`.
    /// Link simulation alone does not need the ordering; the analytic rate
    /// model does.
    pub fn validate_ordered(&self) -> Result<()> {
        self.validate()?;
        if self.gain_near_db < self.gain_far_db {
            return Err(invalid(
                "gain_near_db",
                format!("{} dB is below the far gain {} dB", self.gain_near_db, self.gain_far_db),
            ));
        }
        Ok(())
    }

    /// Per-user post-detection SNRs (linear): the near user after perfect
    /// cancellation, the far user treating the near signal as noise.
    pub fn effective_snr(&self) -> (f64, f64) {
        effective_snr(
            self.rho_near,
            self.rho_far,
            db_to_linear(self.gain_near_db),
            db_to_linear(self.gain_far_db),
        )
    }

    pub fn effective_snr_db(&self) -> (f64, f64) {
        let (n, f) = self.effective_snr();
        (linear_to_db(n), linear_to_db(f))
    }
}

/// `(rho_N g_N, rho_F g_F / (rho_N g_F + 1))` for linear gains `g`.
pub fn effective_snr(rho_near: f64, rho_far: f64, gain_near: f64, gain_far: f64) -> (f64, f64) {
    let near = if rho_near == 0.0 { 0.0 } else { rho_near * gain_near };
    let far = if gain_far.is_infinite() {
        if rho_near == 0.0 {
            f64::INFINITY
        } else {
            rho_far / rho_near
        }
    } else {
        rho_far * gain_far / (rho_near * gain_far + 1.0)
    };
    (near, far)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Detector {
    Neural,
    Sic,
}

impl Detector {
    pub fn name(self) -> &'static str {
        match self {
            Detector::Neural => "neural",
            Detector::Sic => "sic",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkOptions {
    pub seed: u64,
    pub detector: Detector,
    pub channel: ChannelKind,
    pub estimation_error_delta: f64,
    pub rule: SuperpositionRule,
}

impl LinkOptions {
    pub fn new(seed: u64, detector: Detector) -> Self {
        Self {
            seed,
            detector,
            channel: ChannelKind::Awgn,
            estimation_error_delta: 0.0,
            rule: SuperpositionRule::Amplitude,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkReport {
    pub mse_near: f64,
    pub mse_far: f64,
    pub ser_near: f64,
    pub ser_far: f64,
    pub snr_eff_near_db: f64,
    pub snr_eff_far_db: f64,
    pub symbols: usize,
}

/// Bounded synthetic features `s * tanh(spread * z) + d`, `z ~ N(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureSource {
    pub s: f64,
    pub d: f64,
    pub spread: f64,
}

impl FeatureSource {
    pub fn new(s: f64, d: f64) -> Self {
        Self { s, d, spread: 1.0 }
    }

    pub fn sample(&self, len: usize, rng: &mut SimRng) -> Result<FeatureVector> {
        let values = (0..len)
            .map(|_| self.s * (self.spread * rng.standard_normal()).tanh() + self.d)
            .collect();
        FeatureVector::new(values, self.s, self.d)
    }

    pub fn sample_many(&self, count: usize, len: usize, rng: &mut SimRng) -> Result<Vec<FeatureVector>> {
        (0..count).map(|_| self.sample(len, rng)).collect()
    }
}

struct Tally {
    sq_err: f64,
    errors: usize,
    n: usize,
}

impl Tally {
    fn new() -> Self {
        Self { sq_err: 0.0, errors: 0, n: 0 }
    }

    fn add(&mut self, truth_idx: u32, est_idx: u32, truth: f64, est: f64) {
        self.sq_err += (truth - est) * (truth - est);
        self.errors += usize::from(truth_idx != est_idx);
        self.n += 1;
    }

    fn mse(&self) -> f64 {
        self.sq_err / self.n as f64
    }

    fn ser(&self) -> f64 {
        self.errors as f64 / self.n as f64
    }
}

/// Runs every vector pair through the link. Each vector is one fading
/// block; channel draws depend only on `(seed, user)` so different
/// detectors at the same seed see identical channels and noise.
pub fn run_link(
    scenario: &LinkScenario,
    models: &ModemPair,
    near: &[FeatureVector],
    far: &[FeatureVector],
    opts: &LinkOptions,
) -> Result<LinkReport> {
    scenario.validate()?;
    if near.len() != far.len() {
        return Err(Error::LengthMismatch {
            left: near.len(),
            right: far.len(),
        });
    }
    if near.is_empty() {
        return Err(Error::EmptyInput("feature vectors"));
    }
    let q_near = models.near.quantizer();
    let q_far = models.far.quantizer();
    for (m, q, name) in [(scenario.m_near, q_near, "m_near"), (scenario.m_far, q_far, "m_far")] {
        if q.bits() != m {
            return Err(invalid(name, format!("scenario order {m} differs from model order {}", q.bits())));
        }
    }
    let spec_n = ChannelSpec::new(opts.channel, scenario.gain_near_db, opts.estimation_error_delta, opts.seed)?;
    let spec_f = ChannelSpec::new(opts.channel, scenario.gain_far_db, opts.estimation_error_delta, opts.seed)?;
    let mut rng_n = spec_n.rng(0);
    let mut rng_f = spec_f.rng(1);
    let (amp_n, amp_f) = opts.rule.amplitudes(scenario.rho_near, scenario.rho_far);
    let qam = match opts.detector {
        Detector::Sic => Some((QamMap::new(scenario.m_near)?, QamMap::new(scenario.m_far)?)),
        Detector::Neural => None,
    };

    let mut t_near = Tally::new();
    let mut t_far = Tally::new();
    for (vn, vf) in near.iter().zip(far) {
        if vn.len() != vf.len() {
            return Err(Error::LengthMismatch {
                left: vn.len(),
                right: vf.len(),
            });
        }
        let idx_n = q_near.quantize_vector(vn)?;
        let idx_f = q_far.quantize_vector(vf)?;
        let deq_n = q_near.dequantize(&idx_n)?;
        let deq_f = q_far.dequantize(&idx_f)?;

        let (s_n, s_f) = match &qam {
            Some((map_n, map_f)) => (map_n.modulate(&idx_n)?, map_f.modulate(&idx_f)?),
            None => (models.near.transmit_symbols(&deq_n), models.far.transmit_symbols(&deq_f)),
        };
        let x: Vec<Complex64> = s_n.iter().zip(&s_f).map(|(&a, &b)| a * amp_n + b * amp_f).collect();

        let real_n = spec_n.realize(&mut rng_n);
        let real_f = spec_f.realize(&mut rng_f);
        let y_n = real_n.equalize(&real_n.transmit(&x, &mut rng_n))?;
        let y_f = real_f.equalize(&real_f.transmit(&x, &mut rng_f))?;

        match &qam {
            Some((map_n, map_f)) => {
                let (near_hat, _) = sic_detect_amplitudes(&y_n, map_n, map_f, amp_n, amp_f);
                let (_, far_hat) = sic_detect_amplitudes(&y_f, map_n, map_f, amp_n, amp_f);
                score_indices(&mut t_near, q_near, &idx_n, &deq_n, &near_hat)?;
                score_indices(&mut t_far, q_far, &idx_f, &deq_f, &far_hat)?;
            }
            None => {
                let est_n = models.near.demodulate(&y_n);
                let est_f = models.far.demodulate(&y_f);
                let near_hat = est_n.near.expect("near-role model emits near estimates");
                score_estimates(&mut t_near, q_near, &idx_n, &deq_n, &near_hat)?;
                score_estimates(&mut t_far, q_far, &idx_f, &deq_f, &est_f.far)?;
            }
        }
    }

    let (eff_n, eff_f) = scenario.effective_snr_db();
    Ok(LinkReport {
        mse_near: t_near.mse(),
        mse_far: t_far.mse(),
        ser_near: t_near.ser(),
        ser_far: t_far.ser(),
        snr_eff_near_db: eff_n,
        snr_eff_far_db: eff_f,
        symbols: t_near.n,
    })
}

fn score_indices(t: &mut Tally, q: &QuantizerParams, idx: &[u32], deq: &[f64], hat: &[u32]) -> Result<()> {
    let hat_deq = q.dequantize(hat)?;
    for k in 0..idx.len() {
        t.add(idx[k], hat[k], deq[k], hat_deq[k]);
    }
    Ok(())
}

// Both detectors are scored on the dequantized value of the detected index.
fn score_estimates(t: &mut Tally, q: &QuantizerParams, idx: &[u32], deq: &[f64], est: &[f64]) -> Result<()> {
    let hat: Vec<u32> = est.iter().map(|&e| q.nearest_index(e)).collect();
    score_indices(t, q, idx, deq, &hat)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn superpose_examples() {
        let r = SuperpositionRule::Amplitude;
        assert_eq!(superpose(&[c(5.0, 5.0)], &[c(1.0, 0.0)], 0.0, 1.0, r).unwrap(), vec![c(1.0, 0.0)]);
        let z = superpose(&[c(1.0, 0.0)], &[c(-1.0, 0.0)], 0.5, 0.5, r).unwrap();
        assert!(z[0].norm() < 1e-15);
        let x = superpose(&[c(1.0, 0.0)], &[c(1.0, 0.0)], 0.3, 0.7, r).unwrap();
        assert!((x[0].re - 1.3844).abs() < 1e-4);
        assert!((x[0].re - (0.3f64.sqrt() + 0.7f64.sqrt())).abs() < 1e-15);
        let lit = superpose(&[c(1.0, 0.0)], &[c(1.0, 0.0)], 0.3, 0.7, SuperpositionRule::Literal).unwrap();
        assert!((lit[0].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn superpose_errors() {
        let r = SuperpositionRule::Amplitude;
        assert!(matches!(
            superpose(&[c(1.0, 0.0)], &[], 0.3, 0.7, r),
            Err(Error::LengthMismatch { left: 1, right: 0 })
        ));
        assert!(superpose(&[c(1.0, 0.0)], &[c(1.0, 0.0)], 0.3, 0.6, r).is_err());
        assert!(superpose(&[c(1.0, 0.0)], &[c(1.0, 0.0)], -0.1, 1.1, r).is_err());
    }

    #[test]
    fn composite_power_is_unit() {
        let mut rng = SimRng::new(3, 9);
        let n = 200_000;
        let unit = |rng: &mut SimRng| rng.complex_normal(1.0);
        let sn: Vec<_> = (0..n).map(|_| unit(&mut rng)).collect();
        let sf: Vec<_> = (0..n).map(|_| unit(&mut rng)).collect();
        let x = superpose(&sn, &sf, 0.3, 0.7, SuperpositionRule::Amplitude).unwrap();
        let p = x.iter().map(|v| v.norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.02, "{p}");
    }

    #[test]
    fn effective_snr_closed_form() {
        let s = LinkScenario {
            p_max: 1e6,
            bandwidth_w: 1e6,
            rho_near: 0.3,
            rho_far: 0.7,
            gain_near_db: 20.0,
            gain_far_db: 16.0,
            m_near: 2,
            m_far: 2,
        };
        let (n, f) = s.effective_snr_db();
        assert!((n - 14.77).abs() < 0.01, "{n}");
        assert!((f - 3.33).abs() < 0.01, "{f}");
        assert!((n - 10.0 * 30f64.log10()).abs() < 1e-12);
        let g = 10f64.powf(1.6);
        assert!((f - 10.0 * (0.7 * g / (0.3 * g + 1.0)).log10()).abs() < 1e-12);
        s.validate_ordered().unwrap();
        let swapped = LinkScenario {
            gain_near_db: 10.0,
            ..s
        };
        assert!(swapped.validate().is_ok());
        assert!(swapped.validate_ordered().is_err());
    }

    #[test]
    fn effective_snr_noiseless_limit() {
        let (n, f) = effective_snr(0.3, 0.7, f64::INFINITY, f64::INFINITY);
        assert_eq!(n, f64::INFINITY);
        assert!((f - 0.7 / 0.3).abs() < 1e-15);
    }

    #[test]
    fn feature_source_respects_bounds() {
        let src = FeatureSource::new(5.0, 1.0);
        let mut rng = SimRng::new(1, 5);
        let v = src.sample(10_000, &mut rng).unwrap();
        assert!(v.values().iter().all(|&x| (-4.0..=6.0).contains(&x)));
    }
}
