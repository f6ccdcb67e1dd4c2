#![allow(dead_code)]

pub mod oracles;

use semnoma::config::ExperimentConfig;
use semnoma::modem::{train_modem, TrainOutcome};

/// The default experiment's modem pair, trained once per test binary.
pub fn default_training() -> &'static TrainOutcome {
    use std::sync::OnceLock;
    static CELL: OnceLock<TrainOutcome> = OnceLock::new();
    CELL.get_or_init(|| {
        let cfg = ExperimentConfig::default();
        let qn = cfg.quantizer_near().fit().unwrap();
        let qf = cfg.quantizer_far().fit().unwrap();
        train_modem(&cfg.train_config(), &qn, &qf).unwrap()
    })
}
