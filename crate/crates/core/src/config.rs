//! Versioned JSON experiment configuration. Every field has a default, so
//! `{"version": 1}` is a complete config.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::ChannelKind;
use crate::error::{invalid, Error, Result};
use crate::link::{check_power_split, LinkScenario, SuperpositionRule};
use crate::modem::{Activation, TrainConfig, DEFAULT_HIDDEN_WIDTHS};
use crate::quant::QuantizerSpec;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub version: u32,
    pub seed: u64,
    pub rho_near: f64,
    pub rho_far: f64,
    pub m_near: u32,
    pub m_far: u32,
    pub s: f64,
    pub d: f64,
    /// Watts.
    pub p_max: f64,
    /// Hz.
    pub bandwidth_w: f64,
    pub train: TrainSection,
    pub test: TestSection,
    pub regions: RegionsSection,
    pub output_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub snr_near_db: f64,
    pub snr_far_db: f64,
    pub dataset_size: usize,
    pub hidden_widths: Vec<usize>,
    pub hidden_activation: Activation,
    pub superposition: SuperpositionRule,
    pub channel: ChannelKind,
    pub estimation_error_delta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DbRange {
    pub start: f64,
    pub stop: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TestSection {
    pub snr_near_db: DbRange,
    pub snr_far_db: DbRange,
    pub step_db: f64,
    pub channel: ChannelKind,
    pub deltas: Vec<f64>,
    pub seeds: u64,
    pub vectors_per_point: usize,
    pub vector_len: usize,
    /// Spread of the pre-tanh Gaussian of the synthetic feature source.
    pub feature_spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCase {
    pub name: String,
    pub xi_req_far: f64,
    pub rate_req_near: f64,
    pub rate_req_far: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Sweep {
    pub fn values(&self) -> Vec<f64> {
        if self.points <= 1 {
            return vec![self.start];
        }
        (0..self.points)
            .map(|i| self.start + (self.stop - self.start) * i as f64 / (self.points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegionsSection {
    pub gain_near_db: f64,
    pub gain_far_db: f64,
    pub k_symbols_per_word: f64,
    pub compression_ratio: f64,
    pub info_text: f64,
    pub length_text: f64,
    pub info_image: f64,
    pub length_image: f64,
    /// Text on the near user, image on the far user unless swapped.
    pub swap_roles: bool,
    pub xi_req_text: f64,
    pub xi_req_image: f64,
    pub grid_points: usize,
    /// Scale of the per-case rate requirements, in units per second.
    pub rate_unit: f64,
    pub power_cases: Vec<PowerCase>,
    pub xi_text_sweep: Sweep,
    /// `gamma_db,accuracy` CSVs; the bundled curves are used when unset.
    pub text_accuracy_csv: Option<PathBuf>,
    pub image_accuracy_csv: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            version: CONFIG_VERSION,
            seed: 2024,
            rho_near: 0.3,
            rho_far: 0.7,
            m_near: 2,
            m_far: 2,
            s: 5.0,
            d: 1.0,
            p_max: 1e6,
            bandwidth_w: 1e6,
            train: TrainSection::default(),
            test: TestSection::default(),
            regions: RegionsSection::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 2000,
            batch_size: 4,
            learning_rate: 0.1,
            snr_near_db: 14.0,
            snr_far_db: 6.0,
            dataset_size: 256,
            hidden_widths: DEFAULT_HIDDEN_WIDTHS.to_vec(),
            hidden_activation: Activation::Relu,
            superposition: SuperpositionRule::Amplitude,
            channel: ChannelKind::Awgn,
            estimation_error_delta: 0.0,
        }
    }
}

impl Default for TestSection {
    fn default() -> Self {
        Self {
            snr_near_db: DbRange { start: 0.0, stop: 28.0 },
            snr_far_db: DbRange { start: -8.0, stop: 20.0 },
            step_db: 2.0,
            channel: ChannelKind::Awgn,
            deltas: vec![0.0],
            seeds: 1,
            vectors_per_point: 16,
            vector_len: 256,
            feature_spread: 1.0,
        }
    }
}

impl Default for RegionsSection {
    fn default() -> Self {
        let case = |name: &str, xi: f64, rn: f64, rf: f64| PowerCase {
            name: name.to_string(),
            xi_req_far: xi,
            rate_req_near: rn,
            rate_req_far: rf,
        };
        Self {
            gain_near_db: 20.0,
            gain_far_db: 16.0,
            k_symbols_per_word: 128.0,
            compression_ratio: 0.33,
            info_text: 1.0,
            length_text: 1.0,
            info_image: 1.0,
            length_image: 1.0,
            swap_roles: false,
            xi_req_text: 0.6,
            xi_req_image: 0.7,
            grid_points: 2048,
            rate_unit: 1e5,
            power_cases: vec![
                case("low", 0.65, 0.063, 3.13),
                case("med", 0.68, 0.069, 4.13),
                case("high", 0.75, 0.075, 5.0),
            ],
            xi_text_sweep: Sweep {
                start: 0.5,
                stop: 0.97,
                points: 48,
            },
            text_accuracy_csv: None,
            image_accuracy_csv: None,
        }
    }
}

/// Range `start..=stop` in `step` increments, robust to float drift.
pub fn db_grid(range: DbRange, step: f64) -> Vec<f64> {
    let n = ((range.stop - range.start) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| range.start + step * i as f64).collect()
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.regions.text_accuracy_csv, &mut cfg.regions.image_accuracy_csv]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(invalid("version", format!("expected {CONFIG_VERSION}, found {}", self.version)));
        }
        check_power_split(self.rho_near, self.rho_far)?;
        self.quantizer_near().fit()?;
        self.quantizer_far().fit()?;
        self.train_config().validate()?;
        let t = &self.test;
        if !(t.step_db > 0.0 && t.step_db.is_finite()) {
            return Err(invalid("test.step_db", "must be finite and > 0"));
        }
        for (name, r) in [("test.snr_near_db", t.snr_near_db), ("test.snr_far_db", t.snr_far_db)] {
            if !(r.start.is_finite() && r.stop.is_finite() && r.stop >= r.start) {
                return Err(invalid(name, "needs finite start <= stop"));
            }
        }
        if t.deltas.is_empty() || t.deltas.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(invalid("test.deltas", "needs at least one finite delta >= 0"));
        }
        if t.seeds == 0 || t.vectors_per_point == 0 || t.vector_len == 0 {
            return Err(invalid("test", "seeds, vectors_per_point and vector_len must be >= 1"));
        }
        if !(t.feature_spread > 0.0 && t.feature_spread.is_finite()) {
            return Err(invalid("test.feature_spread", "must be finite and > 0"));
        }
        let r = &self.regions;
        if r.grid_points < 2 {
            return Err(invalid("regions.grid_points", "must be >= 2"));
        }
        if !(r.rate_unit > 0.0 && r.rate_unit.is_finite()) {
            return Err(invalid("regions.rate_unit", "must be finite and > 0"));
        }
        if r.xi_text_sweep.points == 0 {
            return Err(invalid("regions.xi_text_sweep.points", "must be >= 1"));
        }
        self.link_scenario(r.gain_near_db, r.gain_far_db).validate_ordered()?;
        Ok(())
    }

    pub fn quantizer_near(&self) -> QuantizerSpec {
        QuantizerSpec {
            m: self.m_near,
            s: self.s,
            d: self.d,
        }
    }

    pub fn quantizer_far(&self) -> QuantizerSpec {
        QuantizerSpec {
            m: self.m_far,
            s: self.s,
            d: self.d,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            snr_train_near_db: t.snr_near_db,
            snr_train_far_db: t.snr_far_db,
            rho_near: self.rho_near,
            rho_far: self.rho_far,
            seed: self.seed,
            dataset_size: t.dataset_size,
            hidden_widths: t.hidden_widths.clone(),
            hidden_activation: t.hidden_activation,
            superposition: t.superposition,
            channel: t.channel,
            estimation_error_delta: t.estimation_error_delta,
        }
    }

    pub fn link_scenario(&self, gain_near_db: f64, gain_far_db: f64) -> LinkScenario {
        LinkScenario {
            p_max: self.p_max,
            bandwidth_w: self.bandwidth_w,
            rho_near: self.rho_near,
            rho_far: self.rho_far,
            gain_near_db,
            gain_far_db,
            m_near: self.m_near,
            m_far: self.m_far,
        }
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> String {
        let canonical = Self {
            output_dir: PathBuf::new(),
            ..self.clone()
        };
        let text = serde_json::to_string(&canonical).expect("config serializes");
        let digest = Sha256::digest(text.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// First line of every emitted CSV.
    pub fn csv_preamble(&self) -> String {
        format!("# config_hash={} seed={}\n", self.hash(), self.seed)
    }
}

/// Parse failure located in the config text.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigDiagnostic {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl ConfigDiagnostic {
    pub fn of(err: &Error) -> Option<Self> {
        match err {
            Error::Json(e) => Some(ConfigDiagnostic {
                line: e.line(),
                column: e.column(),
                message: e.to_string(),
            }),
            _ => None,
        }
    }
}
