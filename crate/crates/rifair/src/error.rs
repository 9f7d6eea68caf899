//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by the rifair toolkit.
///
/// Variants are grouped so a CLI can map them onto exit codes: schema and
/// data problems are recoverable user errors, `Numeric` signals an aborted
/// computation (e.g. NaN loss during training).
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("instances are not similar: {0}")]
    NotSimilar(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numeric abort: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code for the CLI: 2 for data/schema problems, 3 for numeric aborts.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}
