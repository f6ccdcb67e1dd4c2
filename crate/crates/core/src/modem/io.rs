//! JSON model files. Every float is written in scientific notation with 17
//! significant digits so a load reproduces the saved bits exactly.

use std::fs;
use std::path::Path;

use serde::de::Deserializer;
use serde::ser::{Error as _, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Activation, DenseLayer, LayerStack, ModemModel, ModemPair, Modulator, Role};
use crate::error::{Error, Result};
use crate::quant::QuantizerSpec;

pub const MODEL_FORMAT: &str = "semnoma-modem";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Exact(f64);

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return Err(S::Error::custom(format!("non-finite parameter {}", self.0)));
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(S::Error::custom)?;
        raw.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        f64::deserialize(d).map(Exact)
    }
}

fn exact(v: &[f64]) -> Vec<Exact> {
    v.iter().copied().map(Exact).collect()
}

fn plain(v: &[Exact]) -> Vec<f64> {
    v.iter().map(|e| e.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<Exact>,
    bias: Vec<Exact>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantDoc {
    m: u32,
    s: Exact,
    d: Exact,
}

/// On-disk form of one trained user model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDocument {
    format: String,
    version: u32,
    role: Role,
    quantizer: QuantDoc,
    modulator_weight: [Exact; 2],
    modulator_bias: [Exact; 2],
    mean_power: Exact,
    widths: Vec<usize>,
    layers: Vec<LayerDoc>,
}

impl ModelDocument {
    pub fn from_model(m: &ModemModel) -> Self {
        let q = m.quantizer().spec();
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            role: m.role,
            quantizer: QuantDoc {
                m: q.m,
                s: Exact(q.s),
                d: Exact(q.d),
            },
            modulator_weight: [Exact(m.modulator.weight[0]), Exact(m.modulator.weight[1])],
            modulator_bias: [Exact(m.modulator.bias[0]), Exact(m.modulator.bias[1])],
            mean_power: Exact(m.mean_power),
            widths: m.demodulator.widths(),
            layers: m
                .demodulator
                .layers
                .iter()
                .map(|l| LayerDoc {
                    in_dim: l.in_dim,
                    out_dim: l.out_dim,
                    activation: l.activation,
                    weights: exact(&l.weights),
                    bias: exact(&l.bias),
                })
                .collect(),
        }
    }

    pub fn role(&self) -> Role {
        self.role
    }

    pub fn into_model(self) -> Result<ModemModel> {
        if self.format != MODEL_FORMAT {
            return Err(Error::ModelFormat(format!("unknown format {:?}", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::ModelFormat(format!("unsupported version {}", self.version)));
        }
        let mut layers = Vec::with_capacity(self.layers.len());
        for (i, l) in self.layers.into_iter().enumerate() {
            if l.weights.len() != l.in_dim * l.out_dim || l.bias.len() != l.out_dim {
                return Err(Error::ModelFormat(format!("layer {i}: parameter count does not match shape")));
            }
            layers.push(DenseLayer {
                in_dim: l.in_dim,
                out_dim: l.out_dim,
                weights: plain(&l.weights),
                bias: plain(&l.bias),
                activation: l.activation,
            });
        }
        let stack = LayerStack { layers };
        if stack.widths() != self.widths {
            return Err(Error::ModelFormat(format!(
                "widths {:?} disagree with layer shapes {:?}",
                self.widths,
                stack.widths()
            )));
        }
        let modulator = Modulator {
            weight: [self.modulator_weight[0].0, self.modulator_weight[1].0],
            bias: [self.modulator_bias[0].0, self.modulator_bias[1].0],
        };
        let spec = QuantizerSpec {
            m: self.quantizer.m,
            s: self.quantizer.s.0,
            d: self.quantizer.d.0,
        };
        let mut model = ModemModel::new(self.role, modulator, stack, spec)?;
        let stored = self.mean_power.0;
        if !(stored > 0.0 && stored.is_finite()) {
            return Err(Error::NonPositivePower(stored));
        }
        model.mean_power = stored;
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

pub fn save_model(path: &Path, model: &ModemModel) -> Result<()> {
    fs::write(path, ModelDocument::from_model(model).to_json()?)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<ModemModel> {
    let text = fs::read_to_string(path)?;
    ModelDocument::from_json(&text)?.into_model()
}

/// Loads a near and a far model and checks their roles.
pub fn load_pair(near: &Path, far: &Path) -> Result<ModemPair> {
    let near = load_model(near)?;
    let far = load_model(far)?;
    if near.role != Role::Near || far.role != Role::Far {
        return Err(Error::ModelFormat(format!(
            "expected near and far models, found {:?} and {:?}",
            near.role, far.role
        )));
    }
    Ok(ModemPair { near, far })
}
