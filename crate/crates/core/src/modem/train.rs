//! Joint SGD training of the near/far modem pair.
//!
//! Forward path per sample: modulate, normalize by the uniform-distribution
//! mean power, superpose, apply the equalized channel `(h x + n) / h_hat`,
//! demodulate. The objective is `L_near + L_far`, each the batch mean of the
//! squared errors of that user's demodulator outputs. Gradients flow through
//! the power normalization into both modulators.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{Activation, ModemModel, ModemPair, Modulator, Role, StackGrad, DEFAULT_HIDDEN_WIDTHS};
use crate::channel::{ChannelKind, ChannelSpec};
use crate::error::{invalid, Error, Result};
use crate::link::SuperpositionRule;
use crate::quant::QuantizerParams;
use crate::rng::{stream, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub snr_train_near_db: f64,
    pub snr_train_far_db: f64,
    pub rho_near: f64,
    pub rho_far: f64,
    pub seed: u64,
    /// Number of (near, far) value pairs in the training set; one epoch is
    /// one shuffled pass over it in mini-batches.
    #[serde(default = "default_dataset_size")]
    pub dataset_size: usize,
    #[serde(default = "default_hidden")]
    pub hidden_widths: Vec<usize>,
    #[serde(default = "default_activation")]
    pub hidden_activation: Activation,
    #[serde(default)]
    pub superposition: SuperpositionRule,
    #[serde(default = "default_channel")]
    pub channel: ChannelKind,
    #[serde(default)]
    pub estimation_error_delta: f64,
}

fn default_dataset_size() -> usize {
    256
}

fn default_hidden() -> Vec<usize> {
    DEFAULT_HIDDEN_WIDTHS.to_vec()
}

fn default_activation() -> Activation {
    Activation::Relu
}

fn default_channel() -> ChannelKind {
    ChannelKind::Awgn
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 4,
            learning_rate: 0.1,
            snr_train_near_db: 14.0,
            snr_train_far_db: 6.0,
            rho_near: 0.3,
            rho_far: 0.7,
            seed: 2024,
            dataset_size: default_dataset_size(),
            hidden_widths: default_hidden(),
            hidden_activation: default_activation(),
            superposition: SuperpositionRule::default(),
            channel: default_channel(),
            estimation_error_delta: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 {
            return Err(invalid("epochs", "must be >= 1"));
        }
        if self.batch_size < 1 {
            return Err(invalid("batch_size", "must be >= 1"));
        }
        if self.dataset_size < 1 {
            return Err(invalid("dataset_size", "must be >= 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", "must be finite and >= 0"));
        }
        crate::link::check_power_split(self.rho_near, self.rho_far)?;
        if self.hidden_widths.contains(&0) {
            return Err(invalid("hidden_widths", "widths must be positive"));
        }
        for (name, snr) in [
            ("snr_train_near_db", self.snr_train_near_db),
            ("snr_train_far_db", self.snr_train_far_db),
        ] {
            if snr.is_nan() || snr == f64::NEG_INFINITY {
                return Err(invalid(name, "must be a number or +inf (noiseless)"));
            }
        }
        if !(self.estimation_error_delta >= 0.0 && self.estimation_error_delta.is_finite()) {
            return Err(invalid("estimation_error_delta", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// One mini-batch with its channel draws already applied in equalized form:
/// the demodulator of user `u` sees `gain_u * x + noise_u`.
///
/// Demodulator targets are `v / unit` for each user's `unit`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    pub v_near: Vec<f64>,
    pub v_far: Vec<f64>,
    pub unit_near: f64,
    pub unit_far: f64,
    pub gain_near: Complex64,
    pub gain_far: Complex64,
    pub noise_near: Vec<Complex64>,
    pub noise_far: Vec<Complex64>,
}

impl TrainBatch {
    pub fn noiseless(v_near: Vec<f64>, v_far: Vec<f64>) -> Self {
        let n = v_near.len();
        Self {
            v_near,
            v_far,
            unit_near: 1.0,
            unit_far: 1.0,
            gain_near: Complex64::new(1.0, 0.0),
            gain_far: Complex64::new(1.0, 0.0),
            noise_near: vec![Complex64::new(0.0, 0.0); n],
            noise_far: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn len(&self) -> usize {
        self.v_near.len()
    }

    pub fn is_empty(&self) -> bool {
        self.v_near.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub near: f64,
    pub far: f64,
}

impl Losses {
    pub fn total(&self) -> f64 {
        self.near + self.far
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub near: f64,
    pub far: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModulatorGrad {
    pub weight: [f64; 2],
    pub bias: [f64; 2],
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairGradients {
    pub near_mod: ModulatorGrad,
    pub near_demod: StackGrad,
    pub far_mod: ModulatorGrad,
    pub far_demod: StackGrad,
}

impl PairGradients {
    /// Same ordering as [`ModemPair::for_each_param_mut`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        out.extend_from_slice(&self.near_mod.weight);
        out.extend_from_slice(&self.near_mod.bias);
        self.near_demod.flatten_into(&mut out);
        out.extend_from_slice(&self.far_mod.weight);
        out.extend_from_slice(&self.far_mod.bias);
        self.far_demod.flatten_into(&mut out);
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub pair: ModemPair,
    pub trace: Vec<EpochLoss>,
}

struct Transmit {
    points: Vec<f64>,
    scale: f64,
}

impl Transmit {
    fn new(m: &Modulator, points: &[f64]) -> Self {
        let p = m.mean_power(points);
        Self {
            points: points.to_vec(),
            scale: 1.0 / p.sqrt(),
        }
    }
}

/// Losses without gradients.
pub fn forward_losses(pair: &ModemPair, batch: &TrainBatch, rule: SuperpositionRule, rho: (f64, f64)) -> Losses {
    run(pair, batch, rule, rho, false).0
}

/// Losses and exact gradients of `L_near + L_far` for every parameter.
pub fn loss_and_gradients(
    pair: &ModemPair,
    batch: &TrainBatch,
    rule: SuperpositionRule,
    rho: (f64, f64),
) -> (Losses, PairGradients) {
    let (l, g) = run(pair, batch, rule, rho, true);
    (l, g.expect("gradients requested"))
}

fn run(
    pair: &ModemPair,
    batch: &TrainBatch,
    rule: SuperpositionRule,
    rho: (f64, f64),
    want_grad: bool,
) -> (Losses, Option<PairGradients>) {
    let (amp_n, amp_f) = rule.amplitudes(rho.0, rho.1);
    let tx_n = Transmit::new(&pair.near.modulator, pair.near.quantizer().constellation());
    let tx_f = Transmit::new(&pair.far.modulator, pair.far.quantizer().constellation());
    let inv_b = 1.0 / batch.len() as f64;

    let mut grads = want_grad.then(|| PairGradients {
        near_mod: ModulatorGrad { weight: [0.0; 2], bias: [0.0; 2] },
        near_demod: pair.near.demodulator.zero_grad(),
        far_mod: ModulatorGrad { weight: [0.0; 2], bias: [0.0; 2] },
        far_demod: pair.far.demodulator.zero_grad(),
    });
    // dL/d(scale) accumulators for the normalization path
    let mut d_scale_n = 0.0;
    let mut d_scale_f = 0.0;
    let mut loss_n = 0.0;
    let mut loss_f = 0.0;

    for k in 0..batch.len() {
        let (vn, vf) = (batch.v_near[k], batch.v_far[k]);
        let raw_n = pair.near.modulator.apply(vn);
        let raw_f = pair.far.modulator.apply(vf);
        let x = raw_n * (amp_n * tx_n.scale) + raw_f * (amp_f * tx_f.scale);
        let y_n = batch.gain_near * x + batch.noise_near[k];
        let y_f = batch.gain_far * x + batch.noise_far[k];

        let cache_n = pair.near.demodulator.forward(&[y_n.re, y_n.im]);
        let cache_f = pair.far.demodulator.forward(&[y_f.re, y_f.im]);
        let out_n = cache_n.output();
        let out_f = cache_f.output();
        let e_nn = out_n[0] - vn / batch.unit_near;
        let e_nf = out_n[1] - vf / batch.unit_far;
        let e_ff = out_f[0] - vf / batch.unit_far;
        loss_n += e_nn * e_nn + e_nf * e_nf;
        loss_f += e_ff * e_ff;

        if let Some(g) = grads.as_mut() {
            let gy_n = pair.near.demodulator.backward(
                &cache_n,
                &[2.0 * e_nn * inv_b, 2.0 * e_nf * inv_b],
                &mut g.near_demod,
            );
            let gy_f = pair.far.demodulator.backward(&cache_f, &[2.0 * e_ff * inv_b], &mut g.far_demod);
            // y = g x (complex) => dL/dx = conj(g) dL/dy
            let gx = batch.gain_near.conj() * Complex64::new(gy_n[0], gy_n[1])
                + batch.gain_far.conj() * Complex64::new(gy_f[0], gy_f[1]);
            let g_sn = gx * amp_n;
            let g_sf = gx * amp_f;
            accumulate_mod(&mut g.near_mod, g_sn, vn, tx_n.scale);
            accumulate_mod(&mut g.far_mod, g_sf, vf, tx_f.scale);
            d_scale_n += g_sn.re * raw_n.re + g_sn.im * raw_n.im;
            d_scale_f += g_sf.re * raw_f.re + g_sf.im * raw_f.im;
        }
    }

    if let Some(g) = grads.as_mut() {
        normalization_grad(&mut g.near_mod, &pair.near.modulator, &tx_n, d_scale_n);
        normalization_grad(&mut g.far_mod, &pair.far.modulator, &tx_f, d_scale_f);
    }
    (
        Losses {
            near: loss_n * inv_b,
            far: loss_f * inv_b,
        },
        grads,
    )
}

fn accumulate_mod(g: &mut ModulatorGrad, g_sym: Complex64, v: f64, scale: f64) {
    g.weight[0] += scale * g_sym.re * v;
    g.weight[1] += scale * g_sym.im * v;
    g.bias[0] += scale * g_sym.re;
    g.bias[1] += scale * g_sym.im;
}

// scale = p^(-1/2), p = mean_i |w c_i + b|^2
fn normalization_grad(g: &mut ModulatorGrad, m: &Modulator, tx: &Transmit, d_scale: f64) {
    let p = 1.0 / (tx.scale * tx.scale);
    let d_p = d_scale * (-0.5) * p.powf(-1.5);
    let inv_m = 1.0 / tx.points.len() as f64;
    for j in 0..2 {
        let (mut dw, mut db) = (0.0, 0.0);
        for &c in &tx.points {
            let s = m.weight[j] * c + m.bias[j];
            dw += 2.0 * s * c;
            db += 2.0 * s;
        }
        g.weight[j] += d_p * dw * inv_m;
        g.bias[j] += d_p * db * inv_m;
    }
}

fn sgd_step(pair: &mut ModemPair, grads: &PairGradients, lr: f64) {
    let flat = grads.flatten();
    let mut it = flat.iter();
    pair.for_each_param_mut(|p| *p -= lr * it.next().expect("gradient length"));
}

/// Trains the near/far pair. The training set samples every constellation
/// point with probability `1 / 2^m`.
///
/// During training the demodulators regress onto `v / step`, so the loss
/// trace is in units of constellation spacing. The step is folded back into
/// the output layers before returning, and the returned models emit
/// dequantized values.
pub fn train_modem(cfg: &TrainConfig, q_near: &QuantizerParams, q_far: &QuantizerParams) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut init_n = SimRng::new(cfg.seed, stream::INIT_NEAR);
    let mut init_f = SimRng::new(cfg.seed, stream::INIT_FAR);
    let near = ModemModel::init(Role::Near, q_near.spec(), &cfg.hidden_widths, cfg.hidden_activation, &mut init_n)?;
    let far = ModemModel::init(Role::Far, q_far.spec(), &cfg.hidden_widths, cfg.hidden_activation, &mut init_f)?;
    let mut pair = ModemPair { near, far };

    let mut data_rng = SimRng::new(cfg.seed, stream::DATASET);
    let levels_n = q_near.levels() as u64;
    let levels_f = q_far.levels() as u64;
    let dataset: Vec<(f64, f64)> = (0..cfg.dataset_size)
        .map(|_| {
            let a = q_near.constellation()[data_rng.below(levels_n) as usize];
            let b = q_far.constellation()[data_rng.below(levels_f) as usize];
            (a, b)
        })
        .collect();

    let spec_n = ChannelSpec::new(cfg.channel, cfg.snr_train_near_db, cfg.estimation_error_delta, cfg.seed)?;
    let spec_f = ChannelSpec::new(cfg.channel, cfg.snr_train_far_db, cfg.estimation_error_delta, cfg.seed)?;
    let mut link_n = spec_n.rng(0);
    let mut link_f = spec_f.rng(1);
    let mut shuffle = SimRng::new(cfg.seed, stream::SHUFFLE);
    let rho = (cfg.rho_near, cfg.rho_far);

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        shuffle.shuffle(&mut order);
        let mut sum = Losses { near: 0.0, far: 0.0 };
        for chunk in order.chunks(cfg.batch_size) {
            let real_n = spec_n.realize(&mut link_n);
            let real_f = spec_f.realize(&mut link_f);
            if real_n.h_hat.norm_sqr() == 0.0 || real_f.h_hat.norm_sqr() == 0.0 {
                return Err(Error::ZeroEstimatedGain);
            }
            let batch = TrainBatch {
                v_near: chunk.iter().map(|&i| dataset[i].0).collect(),
                v_far: chunk.iter().map(|&i| dataset[i].1).collect(),
                unit_near: q_near.step(),
                unit_far: q_far.step(),
                gain_near: real_n.residual_gain(),
                gain_far: real_f.residual_gain(),
                noise_near: chunk
                    .iter()
                    .map(|_| link_n.complex_normal(real_n.noise_sigma2) / real_n.h_hat)
                    .collect(),
                noise_far: chunk
                    .iter()
                    .map(|_| link_f.complex_normal(real_f.noise_sigma2) / real_f.h_hat)
                    .collect(),
            };
            let (losses, grads) = loss_and_gradients(&pair, &batch, cfg.superposition, rho);
            if !losses.total().is_finite() {
                return Err(Error::Divergence { epoch });
            }
            let w = chunk.len() as f64;
            sum.near += losses.near * w;
            sum.far += losses.far * w;
            if cfg.learning_rate > 0.0 {
                sgd_step(&mut pair, &grads, cfg.learning_rate);
            }
        }
        let n = dataset.len() as f64;
        let row = EpochLoss {
            epoch,
            near: sum.near / n,
            far: sum.far / n,
        };
        if !(row.near.is_finite() && row.far.is_finite()) {
            return Err(Error::Divergence { epoch });
        }
        trace.push(row);
    }

    let units = [q_near.step(), q_far.step()];
    pair.near.demodulator.scale_outputs(&units);
    pair.far.demodulator.scale_outputs(&units[1..]);
    pair.near.refresh_mean_power();
    pair.far.refresh_mean_power();
    for m in [&pair.near, &pair.far] {
        if !(m.mean_power > 0.0 && m.mean_power.is_finite()) {
            return Err(Error::NonPositivePower(m.mean_power));
        }
    }
    Ok(TrainOutcome { pair, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::fit_quantizer;

    fn quick(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            dataset_size: 32,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let q = fit_quantizer(2, 5.0, 1.0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            snr_train_near_db: f64::INFINITY,
            snr_train_far_db: f64::INFINITY,
            ..quick(5)
        };
        let a = train_modem(&cfg, &q, &q).unwrap();
        let b = train_modem(&TrainConfig { epochs: 1, ..cfg.clone() }, &q, &q).unwrap();
        let mut pa = a.pair.clone();
        let mut pb = b.pair.clone();
        assert_eq!(pa.flatten(), pb.flatten());
        let first = a.trace[0];
        for row in &a.trace {
            assert!((row.near - first.near).abs() <= 1e-12 * first.near.abs());
            assert!((row.far - first.far).abs() <= 1e-12 * first.far.abs());
        }
    }

    #[test]
    fn deterministic_trace() {
        let q = fit_quantizer(2, 5.0, 1.0).unwrap();
        let a = train_modem(&quick(20), &q, &q).unwrap();
        let b = train_modem(&quick(20), &q, &q).unwrap();
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.pair, b.pair);
    }

    #[test]
    fn divergence_is_reported_with_epoch() {
        let q = fit_quantizer(2, 5.0, 1.0).unwrap();
        let cfg = TrainConfig { learning_rate: 1e6, ..quick(50) };
        match train_modem(&cfg, &q, &q) {
            Err(Error::Divergence { epoch }) => assert!(epoch < 50),
            Err(Error::NonPositivePower(_)) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let q = fit_quantizer(2, 5.0, 1.0).unwrap();
        for bad in [
            TrainConfig { rho_near: 0.5, ..TrainConfig::default() },
            TrainConfig { epochs: 0, ..TrainConfig::default() },
            TrainConfig { batch_size: 0, ..TrainConfig::default() },
            TrainConfig { learning_rate: f64::NAN, ..TrainConfig::default() },
        ] {
            assert!(train_modem(&bad, &q, &q).is_err());
        }
    }

    #[test]
    fn loss_decomposes_into_user_terms() {
        let q = fit_quantizer(2, 5.0, 1.0).unwrap();
        let mut rng = SimRng::new(4, 4);
        let near = ModemModel::init(Role::Near, q.spec(), &[8], Activation::Relu, &mut rng).unwrap();
        let far = ModemModel::init(Role::Far, q.spec(), &[8], Activation::Relu, &mut rng).unwrap();
        let pair = ModemPair { near, far };
        let c = q.constellation();
        let batch = TrainBatch::noiseless(vec![c[0], c[3], c[1]], vec![c[2], c[2], c[0]]);
        let l = forward_losses(&pair, &batch, SuperpositionRule::Amplitude, (0.3, 0.7));

        // recompute each term through the public inference path
        let xs: Vec<Complex64> = (0..3)
            .map(|k| {
                pair.near.transmit_symbols(&[batch.v_near[k]])[0] * 0.3f64.sqrt()
                    + pair.far.transmit_symbols(&[batch.v_far[k]])[0] * 0.7f64.sqrt()
            })
            .collect();
        let en = pair.near.demodulate(&xs);
        let ef = pair.far.demodulate(&xs);
        let near_term: f64 = (0..3).map(|k| (en.near.as_ref().unwrap()[k] - batch.v_near[k]).powi(2)).sum::<f64>() / 3.0;
        let far_in_near: f64 = (0..3).map(|k| (en.far[k] - batch.v_far[k]).powi(2)).sum::<f64>() / 3.0;
        let far_term: f64 = (0..3).map(|k| (ef.far[k] - batch.v_far[k]).powi(2)).sum::<f64>() / 3.0;
        assert!((l.near - (near_term + far_in_near)).abs() < 1e-12);
        assert!((l.far - far_term).abs() < 1e-12);
    }
}
