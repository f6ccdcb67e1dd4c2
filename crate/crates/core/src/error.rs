use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid feature bound: need 0 < d < s, got s = {s}, d = {d}")]
    InvalidBound { s: f64, d: f64 },

    #[error("invalid quantization order {0}: must be in 1..=16")]
    InvalidOrder(u32),

    #[error("feature value {value} at position {position} lies outside [{lo}, {hi}]")]
    ValueOutOfRange {
        position: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("index {index} at position {position} outside 0..{levels}")]
    IndexOutOfRange {
        position: usize,
        index: u32,
        levels: usize,
    },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("mean power must be positive and finite, got {0}")]
    NonPositivePower(f64),

    #[error("estimated channel gain is zero")]
    ZeroEstimatedGain,

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    Divergence { epoch: usize },

    #[error("accuracy target {target} outside the model range ({lo}, {hi})")]
    InfeasibleTarget { target: f64, lo: f64, hi: f64 },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("model format: {0}")]
    ModelFormat(String),

    #[error("csv `{file}` line {line}: {reason}")]
    Csv {
        file: String,
        line: usize,
        reason: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
