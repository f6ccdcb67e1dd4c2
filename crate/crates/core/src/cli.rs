//! Subcommand implementations behind the `semnoma` binary. Each writes its
//! artifacts under the output directory and returns what it wrote.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{db_grid, ExperimentConfig};
use crate::error::{Error, Result};
use crate::link::{run_link, Detector, FeatureSource, LinkOptions, LinkReport};
use crate::modem::{load_pair, save_model, train_modem, ModemPair};
use crate::regions::{
    noma_max_far_rate, noma_power_region, noma_rate_region, oma_max_far_rate, oma_power_region, oma_rate_region,
    RegionCurve, RegionQuery, RegionUsers, UserModel,
};
use crate::rng::{mix_seed, stream, SimRng};
use crate::sic::sic_macs_per_symbol;
use crate::srate::{fit_logistic, parse_accuracy_csv, read_accuracy_csv, LogisticFit, SourceProfile};

pub const NEAR_MODEL_FILE: &str = "model_near.json";
pub const FAR_MODEL_FILE: &str = "model_far.json";
pub const LOSS_TRACE_FILE: &str = "loss_trace.csv";
pub const SWEEP_FILE: &str = "sweep.csv";
pub const REGIONS_CSV_FILE: &str = "regions.csv";
pub const REGIONS_JSON_FILE: &str = "regions.json";
pub const MACS_FILE: &str = "macs.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectorChoice {
    Neural,
    Sic,
    #[default]
    Both,
}

impl DetectorChoice {
    pub fn detectors(self) -> &'static [Detector] {
        match self {
            DetectorChoice::Neural => &[Detector::Neural],
            DetectorChoice::Sic => &[Detector::Sic],
            DetectorChoice::Both => &[Detector::Neural, Detector::Sic],
        }
    }
}

/// Command-line values that take precedence over the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub grid_step_db: Option<f64>,
    pub delta: Option<f64>,
}

/// Loads the config (or defaults) and applies overrides before validation,
/// so the config hash describes what actually runs.
pub fn resolve_config(path: Option<&Path>, ov: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = match path {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = ov.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &ov.out {
        cfg.output_dir = out.clone();
    }
    if let Some(step) = ov.grid_step_db {
        cfg.test.step_db = step;
    }
    if let Some(delta) = ov.delta {
        cfg.test.deltas = vec![delta];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, text: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, text)?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub near_model: PathBuf,
    pub far_model: PathBuf,
    pub loss_trace: PathBuf,
    pub pair: ModemPair,
}

pub fn cmd_train_modem(cfg: &ExperimentConfig) -> Result<TrainArtifacts> {
    let q_near = cfg.quantizer_near().fit()?;
    let q_far = cfg.quantizer_far().fit()?;
    let outcome = train_modem(&cfg.train_config(), &q_near, &q_far)?;
    let dir = &cfg.output_dir;
    fs::create_dir_all(dir)?;
    let near_model = dir.join(NEAR_MODEL_FILE);
    let far_model = dir.join(FAR_MODEL_FILE);
    save_model(&near_model, &outcome.pair.near)?;
    save_model(&far_model, &outcome.pair.far)?;
    let mut csv = cfg.csv_preamble();
    csv.push_str("epoch,loss_near,loss_far\n");
    for row in &outcome.trace {
        writeln!(csv, "{},{},{}", row.epoch, row.near, row.far).expect("string write");
    }
    let loss_trace = write_file(dir, LOSS_TRACE_FILE, &csv)?;
    Ok(TrainArtifacts {
        near_model,
        far_model,
        loss_trace,
        pair: outcome.pair,
    })
}

pub fn load_models(dir: &Path) -> Result<ModemPair> {
    let near = dir.join(NEAR_MODEL_FILE);
    let far = dir.join(FAR_MODEL_FILE);
    for p in [&near, &far] {
        if !p.exists() {
            return Err(Error::ModelFormat(format!(
                "missing model file {}; run train-modem first",
                p.display()
            )));
        }
    }
    load_pair(&near, &far)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub seed: u64,
    pub delta: f64,
    pub snr_near_db: f64,
    pub snr_far_db: f64,
    pub detector: Detector,
    pub report: LinkReport,
}

/// Link reports over the test SNR grids, ordered by seed, delta, near SNR,
/// far SNR, detector.
pub fn sweep_rows(cfg: &ExperimentConfig, models: &ModemPair, choice: DetectorChoice) -> Result<Vec<SweepRow>> {
    let near_grid = db_grid(cfg.test.snr_near_db, cfg.test.step_db);
    let far_grid = db_grid(cfg.test.snr_far_db, cfg.test.step_db);
    let source = FeatureSource {
        s: cfg.s,
        d: cfg.d,
        spread: cfg.test.feature_spread,
    };
    let mut cells = Vec::new();
    for s in 0..cfg.test.seeds {
        let seed = mix_seed(cfg.seed, s);
        for &delta in &cfg.test.deltas {
            for &gn in &near_grid {
                for &gf in &far_grid {
                    for &det in choice.detectors() {
                        cells.push((seed, delta, gn, gf, det));
                    }
                }
            }
        }
    }
    let features: Vec<(u64, Vec<_>, Vec<_>)> = (0..cfg.test.seeds)
        .map(|s| {
            let seed = mix_seed(cfg.seed, s);
            let mut rng = SimRng::new(seed, stream::FEATURES);
            let n = source.sample_many(cfg.test.vectors_per_point, cfg.test.vector_len, &mut rng)?;
            let f = source.sample_many(cfg.test.vectors_per_point, cfg.test.vector_len, &mut rng)?;
            Ok((seed, n, f))
        })
        .collect::<Result<_>>()?;

    cells
        .par_iter()
        .map(|&(seed, delta, gn, gf, det)| {
            let (_, near, far) = features.iter().find(|f| f.0 == seed).expect("features per seed");
            let scenario = cfg.link_scenario(gn, gf);
            let opts = LinkOptions {
                seed,
                detector: det,
                channel: cfg.test.channel,
                estimation_error_delta: delta,
                rule: cfg.train.superposition,
            };
            let report = run_link(&scenario, models, near, far, &opts)?;
            Ok(SweepRow {
                seed,
                delta,
                snr_near_db: gn,
                snr_far_db: gf,
                detector: det,
                report,
            })
        })
        .collect()
}

pub fn sweep_csv(cfg: &ExperimentConfig, rows: &[SweepRow]) -> String {
    let mut csv = cfg.csv_preamble();
    csv.push_str(
        "seed,delta,snr_near_db,snr_far_db,detector,mse_near,mse_far,ser_near,ser_far,snr_eff_near_db,snr_eff_far_db,symbols\n",
    );
    for r in rows {
        let p = &r.report;
        writeln!(
            csv,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            r.seed,
            r.delta,
            r.snr_near_db,
            r.snr_far_db,
            r.detector.name(),
            p.mse_near,
            p.mse_far,
            p.ser_near,
            p.ser_far,
            p.snr_eff_near_db,
            p.snr_eff_far_db,
            p.symbols
        )
        .expect("string write");
    }
    csv
}

pub fn cmd_sweep(cfg: &ExperimentConfig, models_dir: &Path, choice: DetectorChoice) -> Result<PathBuf> {
    let models = load_models(models_dir)?;
    let rows = sweep_rows(cfg, &models, choice)?;
    write_file(&cfg.output_dir, SWEEP_FILE, &sweep_csv(cfg, &rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct FittedCurve {
    pub source: String,
    pub fit: LogisticFit,
}

fn fit_curve(path: Option<&Path>, bundled: &str, name: &str) -> Result<FittedCurve> {
    let (samples, source) = match path {
        Some(p) => (read_accuracy_csv(p)?, p.display().to_string()),
        None => (parse_accuracy_csv(bundled, name)?, format!("bundled:{name}")),
    };
    Ok(FittedCurve {
        source,
        fit: fit_logistic(&samples)?,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct NamedCurve {
    pub name: String,
    pub curve: RegionCurve,
}

#[derive(Debug, Clone, Serialize)]
pub struct ContainmentCheck {
    pub points_checked: usize,
    pub violations: usize,
    pub worst_margin: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionsReport {
    pub config_hash: String,
    pub seed: u64,
    pub query: RegionQuery,
    pub users: RegionUsers,
    pub text_fit: FittedCurve,
    pub image_fit: FittedCurve,
    pub curves: Vec<NamedCurve>,
    pub containment: ContainmentCheck,
}

impl RegionsReport {
    pub fn all_empty(&self) -> bool {
        self.curves.iter().all(|c| !c.curve.feasible)
    }
}

pub fn region_setup(cfg: &ExperimentConfig) -> Result<(RegionQuery, RegionUsers, FittedCurve, FittedCurve)> {
    let r = &cfg.regions;
    let text_fit = fit_curve(r.text_accuracy_csv.as_deref(), crate::curves::TEXT_ACCURACY_CSV, "text_accuracy.csv")?;
    let image_fit = fit_curve(r.image_accuracy_csv.as_deref(), crate::curves::IMAGE_ACCURACY_CSV, "image_accuracy.csv")?;
    let text = UserModel {
        profile: SourceProfile::text(r.info_text, r.length_text, r.k_symbols_per_word)?,
        accuracy: text_fit.fit.model,
    };
    let image = UserModel {
        profile: SourceProfile::image(r.info_image, r.length_image, r.compression_ratio)?,
        accuracy: image_fit.fit.model,
    };
    let (users, xi_near, xi_far) = if r.swap_roles {
        (RegionUsers { near: image, far: text }, r.xi_req_image, r.xi_req_text)
    } else {
        (RegionUsers { near: text, far: image }, r.xi_req_text, r.xi_req_image)
    };
    let query = RegionQuery {
        scenario: cfg.link_scenario(r.gain_near_db, r.gain_far_db),
        xi_req_near: xi_near,
        xi_req_far: xi_far,
        rate_req_near: 0.0,
        rate_req_far: 0.0,
        grid_points: r.grid_points,
    };
    query.validate()?;
    Ok((query, users, text_fit, image_fit))
}

/// Query for one named power case; rates scale by `rate_unit * info / length`
/// of the user they apply to.
pub fn power_case_query(cfg: &ExperimentConfig, base: &RegionQuery, users: &RegionUsers, case: usize) -> RegionQuery {
    let c = &cfg.regions.power_cases[case];
    let unit = cfg.regions.rate_unit;
    let per = |u: &UserModel| u.profile.info_per_item / u.profile.length_per_item;
    RegionQuery {
        xi_req_far: c.xi_req_far,
        rate_req_near: c.rate_req_near * unit * per(&users.near),
        rate_req_far: c.rate_req_far * unit * per(&users.far),
        ..*base
    }
}

/// NOMA far rate minus the best OMA far rate at each NOMA near rate.
pub fn check_containment(q: &RegionQuery, users: &RegionUsers, noma: &RegionCurve) -> ContainmentCheck {
    let mut check = ContainmentCheck {
        points_checked: 0,
        violations: 0,
        worst_margin: f64::INFINITY,
    };
    for &(gn, gf) in &noma.points {
        let Some(noma_f) = noma_max_far_rate(q, users, gn) else { continue };
        debug_assert!((noma_f - gf).abs() <= 1e-9 * gf.abs().max(1.0));
        check.points_checked += 1;
        if let Some(oma) = oma_max_far_rate(q, users, gn, q.grid_points) {
            let margin = noma_f - oma.far_rate;
            check.worst_margin = check.worst_margin.min(margin);
            if margin < -1e-9 * noma_f.abs().max(1.0) {
                check.violations += 1;
            }
        }
    }
    check
}

pub fn regions_report(cfg: &ExperimentConfig) -> Result<RegionsReport> {
    let (query, users, text_fit, image_fit) = region_setup(cfg)?;
    let mut curves = vec![
        NamedCurve {
            name: "rate".into(),
            curve: noma_rate_region(&query, &users)?,
        },
        NamedCurve {
            name: "rate".into(),
            curve: oma_rate_region(&query, &users)?,
        },
    ];
    let sweep = cfg.regions.xi_text_sweep.values();
    for (i, case) in cfg.regions.power_cases.iter().enumerate() {
        let q = power_case_query(cfg, &query, &users, i);
        curves.push(NamedCurve {
            name: format!("power_{}", case.name),
            curve: noma_power_region(&q, &users, &sweep)?,
        });
        curves.push(NamedCurve {
            name: format!("power_{}", case.name),
            curve: oma_power_region(&q, &users, &sweep)?,
        });
    }
    let containment = check_containment(&query, &users, &curves[0].curve);
    Ok(RegionsReport {
        config_hash: cfg.hash(),
        seed: cfg.seed,
        query,
        users,
        text_fit,
        image_fit,
        curves,
        containment,
    })
}

pub fn regions_csv(cfg: &ExperimentConfig, report: &RegionsReport) -> String {
    let mut csv = cfg.csv_preamble();
    csv.push_str("curve,scheme,x,y,feasible\n");
    for c in &report.curves {
        let scheme = match c.curve.scheme {
            crate::regions::Scheme::Noma => "noma",
            crate::regions::Scheme::Oma => "oma",
        };
        let mut rows: Vec<(f64, Option<f64>)> = c.curve.points.iter().map(|&(x, y)| (x, Some(y))).collect();
        rows.extend(c.curve.infeasible_x.iter().map(|&x| (x, None)));
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (x, y) in rows {
            match y {
                Some(y) => writeln!(csv, "{},{scheme},{x},{y},true", c.name),
                None => writeln!(csv, "{},{scheme},{x},,false", c.name),
            }
            .expect("string write");
        }
    }
    csv
}

#[derive(Debug, Clone)]
pub struct RegionsArtifacts {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub report: RegionsReport,
}

pub fn cmd_regions(cfg: &ExperimentConfig) -> Result<RegionsArtifacts> {
    let report = regions_report(cfg)?;
    let csv = write_file(&cfg.output_dir, REGIONS_CSV_FILE, &regions_csv(cfg, &report))?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    let json = write_file(&cfg.output_dir, REGIONS_JSON_FILE, &json)?;
    Ok(RegionsArtifacts { csv, json, report })
}

pub const DEFAULT_MESSAGE_LENGTHS: [usize; 8] = [64, 128, 256, 512, 1024, 2048, 4096, 8192];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MacRow {
    pub message_len: usize,
    pub neural_near: usize,
    pub neural_far: usize,
    pub sic: usize,
}

/// Per-message MAC counts: neural modem per user and the SIC baseline.
pub fn mac_table(models: &ModemPair, lengths: &[usize]) -> Vec<MacRow> {
    let near = models.near.count_macs();
    let far = models.far.count_macs();
    let sic = sic_macs_per_symbol(models.near.quantizer().bits(), models.far.quantizer().bits());
    lengths
        .iter()
        .map(|&n| MacRow {
            message_len: n,
            neural_near: near * n,
            neural_far: far * n,
            sic: sic * n,
        })
        .collect()
}

pub fn cmd_macs(cfg: &ExperimentConfig, models_dir: &Path, lengths: &[usize]) -> Result<PathBuf> {
    let models = load_models(models_dir)?;
    let mut csv = cfg.csv_preamble();
    csv.push_str("message_len,neural_near,neural_far,sic\n");
    csv.push_str(&format!("1,{},{},{}\n", models.near.count_macs(), models.far.count_macs(), mac_table(&models, &[1])[0].sic));
    for r in mac_table(&models, lengths) {
        writeln!(csv, "{},{},{},{}", r.message_len, r.neural_near, r.neural_far, r.sic).expect("string write");
    }
    write_file(&cfg.output_dir, MACS_FILE, &csv)
}
