use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the cache, the harness and the file formats.
#[derive(Debug, Error)]
pub enum AdcError {
    #[error("dimension mismatch for {what}: expected {expected}, got {got}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("rejected input: {0}")]
    RejectedInput(String),

    #[error("evaluation unavailable: no record carries a ground-truth class")]
    EvaluationUnavailable,

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl AdcError {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        AdcError::InvalidConfig {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        AdcError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, AdcError>;
