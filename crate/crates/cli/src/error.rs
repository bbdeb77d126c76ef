use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// TOML syntax or schema error; the message carries line and column.
    #[error("{path}: {message}")]
    Parse { path: String, message: String },

    /// Semantically invalid spec; `field` is a dotted key path.
    #[error("{field}: {message}")]
    Spec { field: String, message: String },

    #[error("{path}: {message}")]
    Log { path: PathBuf, message: String },

    #[error("objective mismatch: {0}")]
    ObjectiveMismatch(String),

    #[error("run {method} seed {seed} failed: {source}")]
    Run {
        method: String,
        seed: u64,
        #[source]
        source: sharpzo::Error,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Core(#[from] sharpzo::Error),

    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    pub(crate) fn spec(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Spec { field: field.into(), message: message.into() }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
