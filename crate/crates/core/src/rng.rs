//! Seeded random streams.
//!
//! Every stochastic component draws from a [`SimRng`]: a ChaCha8 keystream
//! keyed by the 64-bit experiment seed (expanded with the PCG32 constants
//! used by `SeedableRng::seed_from_u64`) and selected by a 64-bit stream id.
//! Uniforms take the top 53 bits of `next_u64`; Gaussians use the
//! Box-Muller transform on pairs of uniforms, so a port only needs ChaCha8
//! and this file to reproduce every draw.

use num_complex::Complex64;
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids. Near and far links never share a stream.
pub mod stream {
    pub const DATASET: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const INIT_NEAR: u64 = 3;
    pub const INIT_FAR: u64 = 4;
    pub const FEATURES: u64 = 5;

    /// Channel gain + noise stream for a given user id (0 = near, 1 = far).
    pub const fn link(user: u64) -> u64 {
        0x100 + user
    }
}

#[derive(Debug, Clone)]
pub struct SimRng {
    inner: ChaCha8Rng,
    spare: Option<f64>,
}

impl SimRng {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self { inner, spare: None }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in [lo, hi).
    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in 0..n (n > 0), rejection-sampled to avoid bias.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0);
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.inner.next_u64();
            if v < zone {
                return v % n;
            }
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        // 1 - u keeps the log argument in (0, 1].
        let u1 = 1.0 - self.uniform();
        let u2 = self.uniform();
        let r = (-2.0 * u1.ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        self.spare = Some(r * theta.sin());
        r * theta.cos()
    }

    /// Circularly-symmetric complex normal with E|z|^2 = variance.
    pub fn complex_normal(&mut self, variance: f64) -> Complex64 {
        let sd = (variance / 2.0).sqrt();
        let re = self.standard_normal();
        let im = self.standard_normal();
        Complex64::new(sd * re, sd * im)
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// SplitMix64 finalizer, used to derive child seeds (e.g. per sweep cell).
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
