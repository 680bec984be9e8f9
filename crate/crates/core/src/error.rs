use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("value error at row {row}: {message}")]
    Value { row: usize, message: String },

    #[error("argument error: {0}")]
    Argument(String),

    #[error("fit error: {0}")]
    Fit(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),

    #[error("model artifact error: {0}")]
    Artifact(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn value(row: usize, message: impl Into<String>) -> Self {
        Error::Value {
            row,
            message: message.into(),
        }
    }

    pub(crate) fn argument(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }

    /// True for errors caused by the caller's configuration or inputs rather
    /// than by estimation at runtime.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Config(_) | Error::MissingInput(_) | Error::Argument(_) | Error::Schema(_)
        )
    }
}
