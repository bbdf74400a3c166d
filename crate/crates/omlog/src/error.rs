//! Crate-wide error type and process exit-code mapping.

use thiserror::Error;

/// Errors surfaced by the detection pipeline and its tooling.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or invalid combination of options.
    #[error("config: {0}")]
    Config(String),

    /// Malformed or unusable input data (log files, label files, checkpoints).
    #[error("data: {0}")]
    Data(String),

    /// Numerical failure (non-finite loss, degenerate operand).
    #[error("numeric: {0}")]
    Numeric(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    /// Process exit code contract: 0 success, 2 usage, 3 data error, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Data(_) | Error::Io(_) => 3,
            Error::Numeric(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
