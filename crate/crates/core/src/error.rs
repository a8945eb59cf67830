use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value in {tensor}; update rejected")]
    NonFinite { tensor: String },

    #[error("invalid configuration `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("ingestion failed for {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("logic error: {0}")]
    Logic(String),

    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}
