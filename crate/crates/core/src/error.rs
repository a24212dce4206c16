use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Caller supplied data that violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// Dimensions or options that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A binary container (embedding cache or checkpoint) failed validation.
    #[error("integrity error at byte offset {offset}: {reason}")]
    Integrity { offset: u64, reason: String },

    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("validation error for record `{record}`, field `{field}`: {reason}")]
    Validation {
        record: String,
        field: String,
        reason: String,
    },

    #[error("training diverged in epoch {epoch}: non-finite {term}")]
    Divergence { epoch: usize, term: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn integrity(offset: u64, reason: impl Into<String>) -> Self {
        Error::Integrity {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
