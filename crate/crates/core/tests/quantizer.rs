mod common;

use common::oracles::constellation;
use semnoma::quant::{fit_quantizer, FeatureVector, QuantizerSpec};
use semnoma::rng::SimRng;

fn sd_grid() -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for i in 0..20 {
        let s = 0.25 + 0.5 * i as f64;
        for j in 0..20 {
            out.push((s, s * (j as f64 + 0.5) / 20.0));
        }
    }
    out
}

#[test]
fn zero_is_always_a_constellation_point() {
    for m in 1..=8 {
        for (s, d) in sd_grid() {
            let q = fit_quantizer(m, s, d).unwrap();
            assert!(q.constellation().contains(&0.0), "m={m} s={s} d={d}");
            assert_eq!(q.constellation()[q.zero_index().unwrap()], 0.0);
        }
    }
}

#[test]
fn constellation_matches_independent_formula() {
    for m in 1..=8 {
        for (s, d) in sd_grid().into_iter().step_by(13) {
            let q = fit_quantizer(m, s, d).unwrap();
            let c = constellation(QuantizerSpec { m, s, d });
            for (a, b) in q.constellation().iter().zip(&c) {
                assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
            }
        }
    }
}

#[test]
fn round_trip_stays_within_one_step() {
    let mut rng = SimRng::new(42, 9);
    let specs = [(2, 5.0, 1.0), (1, 1.0, 0.5), (4, 3.0, 1.5), (8, 2.0, 0.1)];
    for (m, s, d) in specs {
        let q = fit_quantizer(m, s, d).unwrap();
        let xs: Vec<f64> = (0..250_000).map(|_| rng.uniform_range(-s + d, s + d)).collect();
        let back = q.dequantize(&q.quantize(&xs).unwrap()).unwrap();
        let violations = xs.iter().zip(&back).filter(|(x, y)| (*x - *y).abs() > q.step()).count();
        assert_eq!(violations, 0, "m={m} s={s} d={d}");
    }
}

#[test]
fn documented_default_constellation() {
    let q = fit_quantizer(2, 5.0, 1.0).unwrap();
    let want = [-10.0 / 3.0, 0.0, 10.0 / 3.0, 20.0 / 3.0];
    for (a, b) in q.constellation().iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn out_of_range_features_are_rejected() {
    assert!(FeatureVector::new(vec![6.5], 5.0, 1.0).is_err());
    assert!(FeatureVector::new(vec![], 5.0, 1.0).is_err());
    let q = fit_quantizer(2, 5.0, 1.0).unwrap();
    assert!(q.quantize(&[-4.5]).is_err());
    assert!(q.dequantize(&[4]).is_err());
}
