use std::io;
use std::path::PathBuf;

use crate::prediction::FormulaError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong between reading a dataset and writing a plot.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {message}", path.display())]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: {message}", path.display())]
    Dataset { path: PathBuf, message: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Formula(#[from] FormulaError),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("backend unreachable: {0}")]
    BackendUnreachable(String),

    #[error("context overflow: {needed} tokens exceed the backend limit of {limit}")]
    ContextOverflow { needed: usize, limit: usize },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("tokenization mismatch: {0}")]
    Tokenization(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("singular system: {0}")]
    Singular(String),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// Coarse classification used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Backend,
    Data,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dataset(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Dataset {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_) => ErrorClass::Config,
            Error::BackendUnreachable(_)
            | Error::ContextOverflow { .. }
            | Error::Backend(_)
            | Error::Tokenization(_) => ErrorClass::Backend,
            _ => ErrorClass::Data,
        }
    }
}
