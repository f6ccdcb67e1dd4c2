//! Semantic transmission rates and the generalized logistic accuracy model.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::db_to_linear;
use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Text,
    Image,
}

/// Semantic content per item and the symbols spent on it. Text sources are
/// parameterized by symbols per word `K`, images by compression ratio `Cr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceProfile {
    pub kind: SourceKind,
    /// Semantic units per sentence or image.
    pub info_per_item: f64,
    /// Words per sentence or pixels per image.
    pub length_per_item: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_symbols_per_word: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compression_ratio: Option<f64>,
}

impl SourceProfile {
    pub fn text(info_per_item: f64, length_per_item: f64, k: f64) -> Result<Self> {
        let p = Self {
            kind: SourceKind::Text,
            info_per_item,
            length_per_item,
            k_symbols_per_word: Some(k),
            compression_ratio: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn image(info_per_item: f64, length_per_item: f64, cr: f64) -> Result<Self> {
        let p = Self {
            kind: SourceKind::Image,
            info_per_item,
            length_per_item,
            k_symbols_per_word: None,
            compression_ratio: Some(cr),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} must be finite and > 0")))
            }
        };
        positive("info_per_item", self.info_per_item)?;
        positive("length_per_item", self.length_per_item)?;
        match (self.kind, self.k_symbols_per_word, self.compression_ratio) {
            (SourceKind::Text, Some(k), None) => positive("k_symbols_per_word", k),
            (SourceKind::Image, None, Some(cr)) => positive("compression_ratio", cr),
            (SourceKind::Text, _, _) => Err(invalid("k_symbols_per_word", "text sources set K and not Cr")),
            (SourceKind::Image, _, _) => Err(invalid("compression_ratio", "image sources set Cr and not K")),
        }
    }

    /// Symbols per word (`K`) or per pixel (`Cr`).
    pub fn symbols_per_unit(&self) -> f64 {
        match self.kind {
            SourceKind::Text => self.k_symbols_per_word.unwrap_or(f64::NAN),
            SourceKind::Image => self.compression_ratio.unwrap_or(f64::NAN),
        }
    }

    /// Rate at perfect accuracy over bandwidth `w`: `w I / (K L)` or `w I / (Cr L)`.
    pub fn rate_ceiling(&self, w: f64) -> f64 {
        w * self.info_per_item / (self.symbols_per_unit() * self.length_per_item)
    }
}

/// `A1 + (A2 - A1) / (1 + exp(-(C1 gamma + C2)))` over linear SNR `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccuracyModel {
    pub a1: f64,
    pub a2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl AccuracyModel {
    pub fn new(a1: f64, a2: f64, c1: f64, c2: f64) -> Result<Self> {
        if ![a1, a2, c1, c2].iter().all(|v| v.is_finite()) {
            return Err(invalid("accuracy model", "coefficients must be finite"));
        }
        if a2 <= a1 {
            return Err(invalid("a2", format!("{a2} must exceed a1 = {a1}")));
        }
        Ok(Self { a1, a2, c1, c2 })
    }

    pub fn eval(&self, gamma: f64) -> f64 {
        xi_eval(self, gamma)
    }

    pub fn inverse(&self, target: f64) -> Result<f64> {
        xi_inverse(self, target)
    }

    /// Smallest non-negative SNR reaching `target`; `None` when no finite
    /// SNR does.
    pub fn required_snr(&self, target: f64) -> Option<f64> {
        if target.is_nan() {
            return None;
        }
        if self.c1 <= 0.0 {
            return (self.eval(0.0) >= target).then_some(0.0);
        }
        if self.eval(0.0) >= target {
            return Some(0.0);
        }
        if target >= self.a2 {
            return None;
        }
        self.inverse(target).ok().map(|g| g.max(0.0))
    }
}

pub fn xi_eval(model: &AccuracyModel, gamma: f64) -> f64 {
    let u = model.c1 * gamma + model.c2;
    if u == f64::INFINITY {
        return model.a2;
    }
    if u == f64::NEG_INFINITY {
        return model.a1;
    }
    model.a1 + (model.a2 - model.a1) / (1.0 + (-u).exp())
}

pub fn xi_inverse(model: &AccuracyModel, target: f64) -> Result<f64> {
    if !(target > model.a1 && target < model.a2) || model.c1 == 0.0 {
        return Err(Error::InfeasibleTarget {
            target,
            lo: model.a1,
            hi: model.a2,
        });
    }
    let logit = ((target - model.a1) / (model.a2 - target)).ln();
    Ok((logit - model.c2) / model.c1)
}

/// Semantic units per second at linear SNR `gamma` over bandwidth `w`.
pub fn s_rate(profile: &SourceProfile, model: &AccuracyModel, bandwidth_w: f64, gamma: f64) -> f64 {
    profile.rate_ceiling(bandwidth_w) * model.eval(gamma)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FitWarning {
    /// All accuracies equal: the curve carries no slope information.
    Degenerate,
    NotConverged { residual_rms: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub model: AccuracyModel,
    pub residual_rms: f64,
    pub iterations: usize,
    pub warning: Option<FitWarning>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// RMS residual above which the fit carries a warning.
    pub residual_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 2000,
            residual_threshold: 0.05,
        }
    }
}

pub fn fit_logistic(samples: &[(f64, f64)]) -> Result<LogisticFit> {
    fit_logistic_with(samples, FitOptions::default())
}

/// Least squares over `(gamma, accuracy)` pairs.
///
/// Starts from a line fitted to the logit of the data with the asymptotes
/// just outside the observed range, then refines all four coefficients with
/// damped Gauss-Newton steps.
pub fn fit_logistic_with(samples: &[(f64, f64)], opts: FitOptions) -> Result<LogisticFit> {
    if samples.len() < 4 {
        return Err(invalid("samples", format!("need at least 4, got {}", samples.len())));
    }
    for &(g, a) in samples {
        if !g.is_finite() || !(0.0..=1.0).contains(&a) {
            return Err(invalid("samples", format!("({g}, {a}) needs finite gamma and accuracy in [0, 1]")));
        }
    }
    let lo = samples.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let hi = samples.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    if hi - lo < 1e-12 {
        let mean = samples.iter().map(|s| s.1).sum::<f64>() / samples.len() as f64;
        let model = AccuracyModel {
            a1: mean,
            a2: mean,
            c1: 0.0,
            c2: 0.0,
        };
        return Ok(LogisticFit {
            residual_rms: rms(&model, samples),
            model,
            iterations: 0,
            warning: Some(FitWarning::Degenerate),
        });
    }

    let mut theta = initial_guess(samples, lo, hi);
    let mut cost = sum_sq(&theta, samples);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&theta, samples);
        let mut improved = false;
        while lambda < 1e12 {
            let mut a = jtj;
            for i in 0..4 {
                a[i][i] += lambda * jtj[i][i].max(1e-12);
            }
            let Some(step) = solve4(a, jtr.map(|v| -v)) else {
                lambda *= 10.0;
                continue;
            };
            let cand = [theta[0] + step[0], theta[1] + step[1], theta[2] + step[2], theta[3] + step[3]];
            let c = sum_sq(&cand, samples);
            if c.is_finite() && c <= cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                theta = cand;
                cost = c;
                lambda = (lambda / 10.0).max(1e-15);
                improved = rel > 1e-15 && step.iter().any(|s| s.abs() > 1e-15);
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }

    let (a1, a2) = if theta[1] >= theta[0] { (theta[0], theta[1]) } else { (theta[1], theta[0]) };
    // swapping the asymptotes mirrors the sigmoid
    let (c1, c2) = if theta[1] >= theta[0] { (theta[2], theta[3]) } else { (-theta[2], -theta[3]) };
    let model = AccuracyModel { a1, a2, c1, c2 };
    let residual_rms = rms(&model, samples);
    let warning = (residual_rms > opts.residual_threshold).then_some(FitWarning::NotConverged { residual_rms });
    Ok(LogisticFit {
        model,
        residual_rms,
        iterations,
        warning,
    })
}

fn initial_guess(samples: &[(f64, f64)], lo: f64, hi: f64) -> [f64; 4] {
    let margin = 0.05 * (hi - lo);
    let a1 = lo - margin;
    let a2 = hi + margin;
    let n = samples.len() as f64;
    let z: Vec<f64> = samples.iter().map(|&(_, a)| ((a - a1) / (a2 - a)).ln()).collect();
    let gx = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let zx = z.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (s, zi) in samples.iter().zip(&z) {
        sxy += (s.0 - gx) * (zi - zx);
        sxx += (s.0 - gx) * (s.0 - gx);
    }
    let c1 = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    [a1, a2, c1, zx - c1 * gx]
}

fn model_of(t: &[f64; 4]) -> AccuracyModel {
    AccuracyModel {
        a1: t[0],
        a2: t[1],
        c1: t[2],
        c2: t[3],
    }
}

fn sum_sq(t: &[f64; 4], samples: &[(f64, f64)]) -> f64 {
    let m = model_of(t);
    samples.iter().map(|&(g, a)| (m.eval(g) - a).powi(2)).sum()
}

fn rms(m: &AccuracyModel, samples: &[(f64, f64)]) -> f64 {
    (samples.iter().map(|&(g, a)| (m.eval(g) - a).powi(2)).sum::<f64>() / samples.len() as f64).sqrt()
}

fn normal_equations(t: &[f64; 4], samples: &[(f64, f64)]) -> ([[f64; 4]; 4], [f64; 4]) {
    let mut jtj = [[0.0; 4]; 4];
    let mut jtr = [0.0; 4];
    for &(g, a) in samples {
        let u = t[2] * g + t[3];
        let s = 1.0 / (1.0 + (-u).exp());
        let r = t[0] + (t[1] - t[0]) * s - a;
        let ds = (t[1] - t[0]) * s * (1.0 - s);
        let j = [1.0 - s, s, ds * g, ds];
        for i in 0..4 {
            jtr[i] += j[i] * r;
            for k in 0..4 {
                jtj[i][k] += j[i] * j[k];
            }
        }
    }
    (jtj, jtr)
}

// Gaussian elimination with partial pivoting.
fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            for k in col..4 {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let mut s = b[row];
        for k in row + 1..4 {
            s -= a[row][k] * x[k];
        }
        x[row] = s / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    gamma_db: f64,
    accuracy: f64,
}

/// Reads `gamma_db,accuracy` rows (header required, `#` comments allowed)
/// and returns `(linear gamma, accuracy)` pairs.
pub fn read_accuracy_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let file = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    parse_accuracy_csv(&text, &file)
}

pub fn parse_accuracy_csv(text: &str, file: &str) -> Result<Vec<(f64, f64)>> {
    let csv_err = |line: usize, reason: String| Error::Csv {
        file: file.to_string(),
        line,
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    if headers.is_empty() {
        return Err(csv_err(1, "empty file; expected header gamma_db,accuracy".into()));
    }
    if headers.iter().collect::<Vec<_>>() != ["gamma_db", "accuracy"] {
        return Err(csv_err(1, format!("expected header gamma_db,accuracy, found {:?}", headers)));
    }
    let mut out = Vec::new();
    for rec in reader.deserialize::<CsvRow>() {
        let row = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            csv_err(line, e.to_string())
        })?;
        out.push((db_to_linear(row.gamma_db), row.accuracy));
    }
    if out.is_empty() {
        return Err(csv_err(1, "no data rows".into()));
    }
    Ok(out)
}
