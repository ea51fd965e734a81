//! Error type shared by every module of the core crate.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A model, schedule, policy or grid description is internally inconsistent.
    #[error("configuration error: {0}")]
    Config(String),

    /// Vector or dataset dimensions disagree.
    #[error("shape error: expected {expected}, got {actual} ({context})")]
    Shape {
        expected: usize,
        actual: usize,
        context: &'static str,
    },

    /// An argument lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// NaN or infinity where a finite value is required.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("unsupported metric: {0}")]
    UnsupportedMetric(String),

    #[error("calibration error: {0}")]
    Calibration(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(err: csv::Error) -> Self {
        let line = err.position().map(|p| p.line() as usize).unwrap_or(0);
        Error::Parse {
            line,
            message: err.to_string(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
