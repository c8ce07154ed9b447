//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    /// A dataset line failed to parse as JSON. Lines are 1-based.
    #[error("line {line}: malformed JSON: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },

    /// A dataset line parsed but violated a format invariant.
    #[error("line {line}: {msg}")]
    InvalidRecord { line: usize, msg: String },

    /// Bad argument, dimension mismatch, coverage gap, or other caller error.
    #[error("{0}")]
    InvalidInput(String),

    /// A saved model file is unreadable or inconsistent with its use.
    #[error("model: {0}")]
    InvalidModel(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn record(line: usize, msg: impl Into<String>) -> Self {
        Error::InvalidRecord {
            line,
            msg: msg.into(),
        }
    }
}
