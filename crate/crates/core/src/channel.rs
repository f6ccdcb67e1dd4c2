//! Flat AWGN / Rayleigh block-fading channel with imperfect CSI.
//!
//! One gain is drawn per transmitted block. The receive SNR refers to the
//! composite unit-power signal, so `sigma^2 = 10^(-snr_db / 10)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, SimRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelKind {
    Awgn,
    Rayleigh,
}

/// `snr_db = +inf` selects a noiseless link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub kind: ChannelKind,
    pub snr_db: f64,
    pub estimation_error_delta: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub h: Complex64,
    pub h_hat: Complex64,
    pub noise_sigma2: f64,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

impl ChannelSpec {
    pub fn new(kind: ChannelKind, snr_db: f64, delta: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            kind,
            snr_db,
            estimation_error_delta: delta,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(invalid("snr_db", format!("{} is not a usable SNR", self.snr_db)));
        }
        if !(self.estimation_error_delta >= 0.0 && self.estimation_error_delta.is_finite()) {
            return Err(invalid(
                "estimation_error_delta",
                format!("{} must be finite and >= 0", self.estimation_error_delta),
            ));
        }
        Ok(())
    }

    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            1.0 / db_to_linear(self.snr_db)
        }
    }

    /// Independent stream for user `user` (0 = near, 1 = far).
    pub fn rng(&self, user: u64) -> SimRng {
        SimRng::new(self.seed, stream::link(user))
    }

    /// Draws `h`, then the estimation error `e`, from `rng`.
    pub fn realize(&self, rng: &mut SimRng) -> ChannelRealization {
        let h = match self.kind {
            ChannelKind::Awgn => Complex64::new(1.0, 0.0),
            ChannelKind::Rayleigh => rng.complex_normal(1.0),
        };
        // always consumed so a delta sweep sees the same h and noise
        let e = rng.complex_normal(1.0);
        let h_hat = if self.estimation_error_delta == 0.0 {
            h
        } else {
            h + e * self.estimation_error_delta
        };
        ChannelRealization {
            h,
            h_hat,
            noise_sigma2: self.noise_variance(),
        }
    }
}

impl ChannelRealization {
    pub fn ideal() -> Self {
        Self {
            h: Complex64::new(1.0, 0.0),
            h_hat: Complex64::new(1.0, 0.0),
            noise_sigma2: 0.0,
        }
    }

    /// `y_k = h x_k + n_k`.
    pub fn transmit(&self, x: &[Complex64], rng: &mut SimRng) -> Vec<Complex64> {
        x.iter()
            .map(|&xk| self.h * xk + rng.complex_normal(self.noise_sigma2))
            .collect()
    }

    /// Single-tap zero forcing against the estimated gain.
    pub fn equalize(&self, y: &[Complex64]) -> Result<Vec<Complex64>> {
        if self.h_hat.norm_sqr() == 0.0 {
            return Err(Error::ZeroEstimatedGain);
        }
        Ok(y.iter().map(|&yk| yk / self.h_hat).collect())
    }

    /// Effective gain seen after equalization, `h / h_hat`.
    pub fn residual_gain(&self) -> Complex64 {
        self.h / self.h_hat
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: ChannelKind, snr_db: f64, delta: f64) -> ChannelSpec {
        ChannelSpec::new(kind, snr_db, delta, 42).unwrap()
    }

    #[test]
    fn awgn_has_unit_gain() {
        let s = spec(ChannelKind::Awgn, 10.0, 0.0);
        let mut rng = s.rng(0);
        for _ in 0..10 {
            let r = s.realize(&mut rng);
            assert_eq!(r.h, Complex64::new(1.0, 0.0));
            assert_eq!(r.h_hat, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn rayleigh_unit_power() {
        let s = spec(ChannelKind::Rayleigh, 10.0, 0.0);
        let mut rng = s.rng(0);
        let n = 1_000_000;
        let p: f64 = (0..n).map(|_| s.realize(&mut rng).h.norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn estimation_error_variance() {
        let s = spec(ChannelKind::Rayleigh, 10.0, 0.15);
        let mut rng = s.rng(1);
        let n = 1_000_000;
        let e: f64 = (0..n)
            .map(|_| {
                let r = s.realize(&mut rng);
                (r.h_hat - r.h).norm_sqr()
            })
            .sum::<f64>()
            / n as f64;
        assert!((e - 0.0225).abs() < 0.0225 * 0.05, "{e}");
    }

    #[test]
    fn noiseless_identity_and_pure_gain() {
        let mut rng = SimRng::new(1, 1);
        let x = vec![Complex64::new(0.3, -1.2), Complex64::new(1.0, 1.0)];
        let r = ChannelRealization::ideal();
        assert_eq!(r.transmit(&x, &mut rng), x);
        let g = ChannelRealization {
            h: Complex64::new(2.0, 0.0),
            h_hat: Complex64::new(2.0, 0.0),
            noise_sigma2: 0.0,
        };
        assert_eq!(g.transmit(&x[1..], &mut rng), vec![Complex64::new(2.0, 2.0)]);
    }

    #[test]
    fn empirical_snr() {
        let s = spec(ChannelKind::Awgn, 10.0, 0.0);
        let mut rng = s.rng(0);
        let r = s.realize(&mut rng);
        let n = 100_000;
        let x: Vec<Complex64> = (0..n).map(|_| rng.complex_normal(1.0)).collect();
        let y = r.transmit(&x, &mut rng);
        let sig = x.iter().map(|v| v.norm_sqr()).sum::<f64>();
        let noise = y.iter().zip(&x).map(|(a, b)| (a - b).norm_sqr()).sum::<f64>();
        let snr = linear_to_db(sig / noise);
        assert!((snr - 10.0).abs() < 0.2, "{snr}");
    }

    #[test]
    fn equalize_inverts_known_gain() {
        let mut rng = SimRng::new(9, 0);
        let s = ChannelSpec::new(ChannelKind::Rayleigh, f64::INFINITY, 0.0, 3).unwrap();
        let r = s.realize(&mut rng);
        let x = vec![Complex64::new(0.7, -0.2), Complex64::new(-1.5, 0.4)];
        let y = r.equalize(&r.transmit(&x, &mut rng)).unwrap();
        for (a, b) in y.iter().zip(&x) {
            assert!((a - b).norm() < 1e-12);
        }

        let mismatched = ChannelRealization {
            h: Complex64::new(1.0, 0.0),
            h_hat: Complex64::new(1.1, 0.0),
            noise_sigma2: 0.0,
        };
        let y = mismatched.equalize(&[Complex64::new(1.0, 0.0)]).unwrap();
        assert!((y[0].re - 1.0 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn zero_estimate_is_an_error() {
        let r = ChannelRealization {
            h: Complex64::new(1.0, 0.0),
            h_hat: Complex64::new(0.0, 0.0),
            noise_sigma2: 0.1,
        };
        assert!(matches!(r.equalize(&[Complex64::new(1.0, 0.0)]), Err(Error::ZeroEstimatedGain)));
    }

    #[test]
    fn rayleigh_with_perfect_csi_matches_awgn_at_post_equalization_snr() {
        // After y / h the noise variance is sigma^2 / |h|^2; normalizing the
        // residual by that per-block variance must give a unit-variance
        // complex normal, as it does on AWGN.
        let s = spec(ChannelKind::Rayleigh, 5.0, 0.0);
        let mut rng = s.rng(0);
        let n = 100_000;
        let mut acc = 0.0;
        let mut acc4 = 0.0;
        for _ in 0..n {
            let r = s.realize(&mut rng);
            let x = [Complex64::new(1.0, 0.0)];
            let y = r.equalize(&r.transmit(&x, &mut rng)).unwrap();
            let post = r.noise_sigma2 / r.h.norm_sqr();
            let z = (y[0] - x[0]).re / (post / 2.0).sqrt();
            acc += z * z;
            acc4 += z.powi(4);
        }
        let var = acc / n as f64;
        let kurt = acc4 / n as f64;
        assert!((var - 1.0).abs() < 0.02, "{var}");
        assert!((kurt - 3.0).abs() < 0.1, "{kurt}");
    }

    #[test]
    fn noise_is_white() {
        let mut rng = SimRng::new(77, 3);
        let r = ChannelRealization {
            h: Complex64::new(1.0, 0.0),
            h_hat: Complex64::new(1.0, 0.0),
            noise_sigma2: 1.0,
        };
        let n = 1_000_000;
        let y = r.transmit(&vec![Complex64::new(0.0, 0.0); n], &mut rng);
        let power: f64 = y.iter().map(|v| v.norm_sqr()).sum();
        for lag in 1..4 {
            let c: Complex64 = y[lag..].iter().zip(&y).map(|(a, b)| a * b.conj()).sum();
            assert!(c.norm() / power < 0.01, "lag {lag}");
        }
    }

    #[test]
    fn validation() {
        assert!(ChannelSpec::new(ChannelKind::Awgn, f64::NAN, 0.0, 0).is_err());
        assert!(ChannelSpec::new(ChannelKind::Awgn, 3.0, -0.1, 0).is_err());
        assert_eq!(
            ChannelSpec::new(ChannelKind::Awgn, f64::INFINITY, 0.0, 0).unwrap().noise_variance(),
            0.0
        );
    }
}
