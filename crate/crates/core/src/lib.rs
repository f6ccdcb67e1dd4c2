//! Link-level simulation and analysis of two-user downlink NOMA for
//! quantized semantic features.
//!
//! The pipeline is quantize ([`quant`]), modulate with a trained neural
//! modem ([`modem`]), superpose and transmit ([`link`], [`channel`]), and
//! detect either with the neural demodulator or a QAM + SIC baseline
//! ([`sic`]). [`srate`] and [`regions`] cover the analytic side: semantic
//! rates from logistic accuracy curves, and rate/power regions by
//! exhaustive search.

pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod link;
pub mod modem;
pub mod quant;
pub mod regions;
pub mod rng;
pub mod sic;
pub mod srate;

pub use error::{Error, Result};

/// Bundled synthetic accuracy curves, `gamma_db,accuracy`.
pub mod curves {
    pub const TEXT_ACCURACY_CSV: &str = include_str!("../data/text_accuracy.csv");
    pub const IMAGE_ACCURACY_CSV: &str = include_str!("../data/image_accuracy.csv");
}
