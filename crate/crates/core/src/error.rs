use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated an operation's precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// Feature vectors, datasets and trees disagree on the feature layout.
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    /// Not enough calibration records to satisfy the minimum leaf size.
    #[error("calibration infeasible: {available} calibration records, at least {required} required")]
    CalibrationInfeasible { available: usize, required: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed input; `line` is 1-based when the source is line oriented.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
