//! Neural modem: a one-layer linear modulator per user and a dense
//! demodulator stack that consumes the equalized received symbol.
//!
//! The near-role demodulator estimates both users' dequantized values; the
//! far-role demodulator estimates only its own.

mod dense;
mod io;
mod train;

pub use dense::{Activation, DenseLayer, ForwardCache, LayerGrad, LayerStack, StackGrad};
pub use io::{load_model, load_pair, save_model, ModelDocument};
pub use train::{
    forward_losses, loss_and_gradients, train_modem, EpochLoss, Losses, PairGradients, TrainBatch,
    TrainConfig, TrainOutcome,
};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quant::{QuantizerParams, QuantizerSpec};
use crate::rng::SimRng;

pub const DEFAULT_HIDDEN_WIDTHS: [usize; 3] = [32, 32, 32];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Near,
    Far,
}

impl Role {
    pub fn output_dim(self) -> usize {
        match self {
            Role::Near => 2,
            Role::Far => 1,
        }
    }
}

/// Affine map from a scalar constellation value to an I/Q symbol:
/// `s = w v + b` with identity activation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Modulator {
    pub weight: [f64; 2],
    pub bias: [f64; 2],
}

impl Modulator {
    pub fn init(rng: &mut SimRng) -> Self {
        // fan_in = 1
        let weight = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
        let bias = [rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0)];
        Self { weight, bias }
    }

    #[inline]
    pub fn apply(&self, v: f64) -> Complex64 {
        Complex64::new(self.weight[0] * v + self.bias[0], self.weight[1] * v + self.bias[1])
    }

    /// Mean symbol power over `points`, each drawn with equal probability.
    pub fn mean_power(&self, points: &[f64]) -> f64 {
        points.iter().map(|&c| self.apply(c).norm_sqr()).sum::<f64>() / points.len() as f64
    }

    /// Mean power under an arbitrary point distribution.
    pub fn mean_power_weighted(&self, points: &[f64], probs: &[f64]) -> f64 {
        points
            .iter()
            .zip(probs)
            .map(|(&c, &p)| self.apply(c).norm_sqr() * p)
            .sum()
    }

    pub const MACS: usize = 2;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModemModel {
    pub role: Role,
    pub modulator: Modulator,
    pub demodulator: LayerStack,
    /// Frozen mean modulated power under the uniform training distribution.
    pub mean_power: f64,
    quantizer: QuantizerParams,
}

/// Demodulator estimates. `near` is present only for the near role.
#[derive(Debug, Clone, PartialEq)]
pub struct Estimates {
    pub near: Option<Vec<f64>>,
    pub far: Vec<f64>,
}

impl ModemModel {
    pub fn new(
        role: Role,
        modulator: Modulator,
        demodulator: LayerStack,
        quantizer: QuantizerSpec,
    ) -> Result<Self> {
        let quantizer = quantizer.fit()?;
        if demodulator.layers.is_empty() {
            return Err(Error::ModelFormat("demodulator has no layers".into()));
        }
        if demodulator.in_dim() != 2 || demodulator.out_dim() != role.output_dim() {
            return Err(Error::ModelFormat(format!(
                "{role:?} demodulator must map 2 -> {}, got {:?}",
                role.output_dim(),
                demodulator.widths()
            )));
        }
        for pair in demodulator.layers.windows(2) {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::ModelFormat("layer widths do not chain".into()));
            }
        }
        let mean_power = modulator.mean_power(quantizer.constellation());
        if !(mean_power > 0.0 && mean_power.is_finite()) {
            return Err(Error::NonPositivePower(mean_power));
        }
        Ok(Self {
            role,
            modulator,
            demodulator,
            mean_power,
            quantizer,
        })
    }

    /// Randomly initialized model with the given hidden widths.
    pub fn init(
        role: Role,
        quantizer: QuantizerSpec,
        hidden: &[usize],
        activation: Activation,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let modulator = Modulator::init(rng);
        let mut widths = vec![2];
        widths.extend_from_slice(hidden);
        widths.push(role.output_dim());
        let demodulator = LayerStack::init(&widths, activation, rng);
        Self::new(role, modulator, demodulator, quantizer)
    }

    pub fn quantizer(&self) -> &QuantizerParams {
        &self.quantizer
    }

    pub fn modulate(&self, v_deq: &[f64]) -> Vec<Complex64> {
        modulate(v_deq, &self.modulator)
    }

    /// Modulated and power-normalized symbols.
    pub fn transmit_symbols(&self, v_deq: &[f64]) -> Vec<Complex64> {
        let r = 1.0 / self.mean_power.sqrt();
        v_deq.iter().map(|&v| self.modulator.apply(v) * r).collect()
    }

    pub fn demodulate(&self, received: &[Complex64]) -> Estimates {
        demodulate(received, self)
    }

    pub fn count_macs(&self) -> usize {
        count_macs(self)
    }

    pub(crate) fn refresh_mean_power(&mut self) {
        self.mean_power = self.modulator.mean_power(self.quantizer.constellation());
    }
}

pub fn modulate(v_deq: &[f64], modulator: &Modulator) -> Vec<Complex64> {
    v_deq.iter().map(|&v| modulator.apply(v)).collect()
}

pub fn normalize_power(symbols: &[Complex64], mean_power: f64) -> Result<Vec<Complex64>> {
    if !(mean_power > 0.0 && mean_power.is_finite()) {
        return Err(Error::NonPositivePower(mean_power));
    }
    let r = 1.0 / mean_power.sqrt();
    Ok(symbols.iter().map(|&s| s * r).collect())
}

pub fn demodulate(received: &[Complex64], model: &ModemModel) -> Estimates {
    let mut near = Vec::new();
    let mut far = Vec::with_capacity(received.len());
    for y in received {
        let out = model.demodulator.infer(&[y.re, y.im]);
        match model.role {
            Role::Near => {
                near.push(out[0]);
                far.push(out[1]);
            }
            Role::Far => far.push(out[0]),
        }
    }
    Estimates {
        near: (model.role == Role::Near).then_some(near),
        far,
    }
}

/// Multiply-accumulates per processed symbol: modulator plus demodulator.
pub fn count_macs(model: &ModemModel) -> usize {
    Modulator::MACS + model.demodulator.macs()
}

/// The two trained user models of a NOMA pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ModemPair {
    pub near: ModemModel,
    pub far: ModemModel,
}

impl ModemPair {
    pub fn for_each_param_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for m in [&mut self.near, &mut self.far] {
            m.modulator.weight.iter_mut().for_each(&mut f);
            m.modulator.bias.iter_mut().for_each(&mut f);
            m.demodulator.for_each_param_mut(&mut f);
        }
    }

    pub fn flatten(&mut self) -> Vec<f64> {
        let mut out = Vec::new();
        self.for_each_param_mut(|p| out.push(*p));
        out
    }
}
