use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A manifest, CSV or config line could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Data loaded successfully but violates a dataset invariant.
    #[error("validation error in clip `{clip}`: {message}")]
    Validation { clip: String, message: String },

    /// A caller broke an operation's preconditions (shapes, ranges, missing inputs).
    #[error("contract violation: {0}")]
    Contract(String),

    /// Training diverged or could not start.
    #[error("training error: {0}")]
    Training(String),

    /// Invalid configuration value or unresolvable recipe.
    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error on `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn training(msg: impl Into<String>) -> Self {
        Error::Training(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
