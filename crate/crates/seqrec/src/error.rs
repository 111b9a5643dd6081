//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error on {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("unknown input format `{0}` (expected `generic-csv` or `movielens-ratings`)")]
    UnknownFormat(String),

    #[error("{path}: {message}")]
    DataFormat { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    /// Constructor-time validation that reports every violated constraint.
    #[error("invalid configuration: {}", .0.join("; "))]
    Violations(Vec<String>),

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("vocabulary hash mismatch: checkpoint has {found}, artifacts have {expected}")]
    VocabHashMismatch { expected: String, found: String },

    #[error("missing artifact {path} (run the producing command first)")]
    MissingArtifact { path: PathBuf },

    #[error("training diverged (loss {loss:.3e}); retry with a smaller learning rate")]
    Diverged { loss: f64 },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
