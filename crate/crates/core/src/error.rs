use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, McurError>;

#[derive(Debug, Error)]
pub enum McurError {
    #[error("index {index} out of range for dimension of size {bound}")]
    Index { index: usize, bound: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("malformed tensor file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl McurError {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        McurError::Dimension(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        McurError::Config(msg.into())
    }

    pub(crate) fn ingest(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        McurError::Ingestion {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
