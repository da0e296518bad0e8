use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid protein {id}: {message}")]
    InvalidProtein { id: String, message: String },

    #[error("non-canonical amino acid '{letter}' at position {position}")]
    NonCanonicalResidue { letter: char, position: usize },

    #[error("unknown interaction type '{found}' at line {line}; valid types: {valid}")]
    UnknownInteractionType {
        found: String,
        line: usize,
        valid: String,
    },

    #[error("self-interaction of {id} at line {line}")]
    SelfInteraction { id: String, line: usize },

    #[error("missing pooled vector for protein {0}")]
    MissingProtein(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("split error: {0}")]
    Split(String),

    #[error("non-finite loss at epoch {epoch}: {detail}")]
    NonFiniteLoss { epoch: usize, detail: String },

    #[error("serialization error: {0}")]
    Serde(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
