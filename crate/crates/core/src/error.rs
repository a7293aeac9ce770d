use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid GARCH parameters: {0}")]
    InvalidParams(String),

    #[error("invalid innovation model: {0}")]
    InvalidInnovation(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameters are not stationary (gamma = {gamma:.6}, std error = {std_error:.6})")]
    NonStationary { gamma: f64, std_error: f64 },

    #[error("variance recursion diverged at step {step} (sigma^2 = {value:e})")]
    Divergence { step: usize, value: f64 },

    #[error("could not bracket quantile for probability {0}")]
    Bracketing(f64),

    #[error("path and marginal model do not match: {0}")]
    Mismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input {path}: {reason}")]
    Malformed { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors caused by numerics or non-stationary parameters rather
    /// than bad input or I/O.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NonStationary { .. }
                | Error::Divergence { .. }
                | Error::Bracketing(_)
                | Error::Mismatch(_)
                | Error::InsufficientData(_)
        )
    }

    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Malformed { .. }
        )
    }
}
