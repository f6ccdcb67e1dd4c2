//! QAM mapping of quantizer indices and successive interference
//! cancellation, the conventional multi-user detection baseline.
//!
//! Layout: the high `ceil(m/2)` bits of an index select the in-phase level,
//! the low `floor(m/2)` bits the quadrature level. Each bit group is Gray
//! coded onto its axis, so levels adjacent on an axis differ in one bit.
//! Axis coordinates are `2L - (n - 1)` before scaling to unit mean power.
//! `m = 1` degenerates to BPSK on the real axis.

use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QamMap {
    order_m: u32,
    points: Vec<Complex64>,
}

fn gray_decode(mut g: u32) -> u32 {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

impl QamMap {
    pub fn new(order_m: u32) -> Result<Self> {
        if !(1..=16).contains(&order_m) {
            return Err(Error::InvalidOrder(order_m));
        }
        let q_bits = order_m / 2;
        let i_bits = order_m - q_bits;
        let n_i = 1u32 << i_bits;
        let n_q = 1u32 << q_bits;
        let raw: Vec<Complex64> = (0..1u32 << order_m)
            .map(|idx| {
                let li = gray_decode(idx >> q_bits);
                let lq = gray_decode(idx & (n_q - 1));
                Complex64::new(
                    2.0 * li as f64 - (n_i - 1) as f64,
                    2.0 * lq as f64 - (n_q - 1) as f64,
                )
            })
            .collect();
        let power = raw.iter().map(|p| p.norm_sqr()).sum::<f64>() / raw.len() as f64;
        let k = 1.0 / power.sqrt();
        Ok(Self {
            order_m,
            points: raw.into_iter().map(|p| p * k).collect(),
        })
    }

    pub fn order(&self) -> u32 {
        self.order_m
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// Same labeling, every point multiplied by `exp(j phase)`.
    pub fn rotated(&self, phase: f64) -> Self {
        let r = Complex64::from_polar(1.0, phase);
        Self {
            order_m: self.order_m,
            points: self.points.iter().map(|&p| p * r).collect(),
        }
    }

    pub fn modulate(&self, indices: &[u32]) -> Result<Vec<Complex64>> {
        indices
            .iter()
            .enumerate()
            .map(|(position, &i)| {
                self.points.get(i as usize).copied().ok_or(Error::IndexOutOfRange {
                    position,
                    index: i,
                    levels: self.points.len(),
                })
            })
            .collect()
    }

    /// Minimum-distance decision; ties resolve to the lowest index.
    pub fn nearest(&self, y: Complex64) -> u32 {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            let d = (y - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best as u32
    }
}

pub fn qam_modulate(indices: &[u32], map: &QamMap) -> Result<Vec<Complex64>> {
    map.modulate(indices)
}

/// SIC on equalized symbols with `sqrt(rho)` amplitudes.
pub fn sic_detect(
    y: &[Complex64],
    map_near: &QamMap,
    map_far: &QamMap,
    rho_near: f64,
    rho_far: f64,
) -> (Vec<u32>, Vec<u32>) {
    sic_detect_amplitudes(y, map_near, map_far, rho_near.sqrt(), rho_far.sqrt())
}

/// Far user first, treating the near signal as noise; subtract its
/// reconstruction; then the near user from the residual.
pub fn sic_detect_amplitudes(
    y: &[Complex64],
    map_near: &QamMap,
    map_far: &QamMap,
    amp_near: f64,
    amp_far: f64,
) -> (Vec<u32>, Vec<u32>) {
    let mut near = Vec::with_capacity(y.len());
    let mut far = Vec::with_capacity(y.len());
    for &yk in y {
        let f = if amp_far > 0.0 { map_far.nearest(yk / amp_far) } else { 0 };
        let residual = yk - map_far.points[f as usize] * amp_far;
        let n = if amp_near > 0.0 {
            map_near.nearest(residual / amp_near)
        } else {
            map_near.nearest(residual)
        };
        near.push(n);
        far.push(f);
    }
    (near, far)
}

/// Distance evaluations per received symbol times 4 MACs each.
pub fn sic_macs_per_symbol(m_near: u32, m_far: u32) -> usize {
    ((1usize << m_far) + (1usize << m_near)) * 4
}
