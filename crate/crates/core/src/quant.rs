//! Asymmetric quantizer over the fixed feature bound `[-s + d, s + d]`.
//!
//! Scale and zero point are derived once from the analytic bound, so the
//! dequantized constellation is the same for every feature vector.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Slack allowed on the feature bound before a value is rejected.
pub const BOUND_EPSILON: f64 = 1e-9;

const MAX_BITS: u32 = 16;

/// The `(m, s, d)` triple a quantizer is fitted from. This is what model
/// files store.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    pub m: u32,
    pub s: f64,
    pub d: f64,
}

impl QuantizerSpec {
    pub fn fit(&self) -> Result<QuantizerParams> {
        fit_quantizer(self.m, self.s, self.d)
    }
}

/// A bounded feature vector produced by a Tanh-terminated encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
    bound_s: f64,
    bound_d: f64,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>, bound_s: f64, bound_d: f64) -> Result<Self> {
        check_bound(bound_s, bound_d)?;
        if values.is_empty() {
            return Err(Error::EmptyInput("feature vector"));
        }
        check_range(&values, bound_s, bound_d)?;
        Ok(Self {
            values,
            bound_s,
            bound_d,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.bound_s, self.bound_d)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerParams {
    bits: u32,
    scale: f64,
    zero_point: i64,
    bound_s: f64,
    bound_d: f64,
    constellation: Vec<f64>,
}

/// Fits the quantizer for an `m`-bit constellation over `[-s + d, s + d]`.
pub fn fit_quantizer(bits_m: u32, bound_s: f64, bound_d: f64) -> Result<QuantizerParams> {
    if !(1..=MAX_BITS).contains(&bits_m) {
        return Err(Error::InvalidOrder(bits_m));
    }
    check_bound(bound_s, bound_d)?;
    let levels = 1usize << bits_m;
    let scale = (levels - 1) as f64 / ((bound_s + bound_d) - (-bound_s + bound_d));
    let zero_point = ((-bound_s + bound_d) * scale).round() as i64;
    let constellation = (0..levels as i64)
        .map(|i| point(i, zero_point, scale))
        .collect();
    Ok(QuantizerParams {
        bits: bits_m,
        scale,
        zero_point,
        bound_s,
        bound_d,
        constellation,
    })
}

// Integer sum first so the zero point lands on exactly 0.0.
#[inline]
fn point(index: i64, zero_point: i64, scale: f64) -> f64 {
    (index + zero_point) as f64 / scale
}

impl QuantizerParams {
    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn levels(&self) -> usize {
        self.constellation.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn zero_point(&self) -> i64 {
        self.zero_point
    }

    /// Spacing between adjacent constellation points, `1 / f_s`.
    pub fn step(&self) -> f64 {
        1.0 / self.scale
    }

    pub fn constellation(&self) -> &[f64] {
        &self.constellation
    }

    pub fn spec(&self) -> QuantizerSpec {
        QuantizerSpec {
            m: self.bits,
            s: self.bound_s,
            d: self.bound_d,
        }
    }

    pub fn lower_bound(&self) -> f64 {
        -self.bound_s + self.bound_d
    }

    pub fn upper_bound(&self) -> f64 {
        self.bound_s + self.bound_d
    }

    /// Index of the constellation value 0.
    pub fn zero_index(&self) -> Option<usize> {
        let i = -self.zero_point;
        (0..self.levels() as i64).contains(&i).then_some(i as usize)
    }

    pub fn quantize_value(&self, x: f64) -> u32 {
        let max = (self.levels() - 1) as f64;
        (x * self.scale - self.zero_point as f64).round().clamp(0.0, max) as u32
    }

    pub fn quantize(&self, values: &[f64]) -> Result<Vec<u32>> {
        check_range(values, self.bound_s, self.bound_d)?;
        Ok(values.iter().map(|&x| self.quantize_value(x)).collect())
    }

    pub fn quantize_vector(&self, v: &FeatureVector) -> Result<Vec<u32>> {
        self.quantize(v.values())
    }

    pub fn dequantize(&self, indices: &[u32]) -> Result<Vec<f64>> {
        indices
            .iter()
            .enumerate()
            .map(|(position, &index)| {
                self.constellation
                    .get(index as usize)
                    .copied()
                    .ok_or(Error::IndexOutOfRange {
                        position,
                        index,
                        levels: self.levels(),
                    })
            })
            .collect()
    }

    /// Nearest constellation index to an arbitrary real estimate. Ties go
    /// to the lower index.
    pub fn nearest_index(&self, x: f64) -> u32 {
        let max = (self.levels() - 1) as f64;
        let pos = x * self.scale - self.zero_point as f64;
        if pos.is_nan() {
            return 0;
        }
        // round-half-down so ties resolve to the lower index
        let r = (pos - 0.5).ceil();
        r.clamp(0.0, max) as u32
    }

    /// Empirical frequency of each constellation point.
    pub fn constellation_probabilities(&self, indices: &[u32]) -> Result<Vec<f64>> {
        if indices.is_empty() {
            return Err(Error::EmptyInput("index list"));
        }
        let mut counts = vec![0usize; self.levels()];
        for (position, &index) in indices.iter().enumerate() {
            let slot = counts.get_mut(index as usize).ok_or(Error::IndexOutOfRange {
                position,
                index,
                levels: self.levels(),
            })?;
            *slot += 1;
        }
        let n = indices.len() as f64;
        Ok(counts.into_iter().map(|c| c as f64 / n).collect())
    }
}

fn check_bound(s: f64, d: f64) -> Result<()> {
    if !(s.is_finite() && d.is_finite() && s > 0.0 && d > 0.0 && d < s) {
        return Err(Error::InvalidBound { s, d });
    }
    Ok(())
}

fn check_range(values: &[f64], s: f64, d: f64) -> Result<()> {
    for (position, &value) in values.iter().enumerate() {
        if !((value - d).abs() <= s + BOUND_EPSILON) {
            return Err(Error::ValueOutOfRange {
                position,
                value,
                lo: -s + d,
                hi: s + d,
            });
        }
    }
    Ok(())
}
