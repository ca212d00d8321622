use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix `{what}` is not positive definite")]
    NonPositiveDefinite { what: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("missing column `{column}`")]
    Schema { column: String },

    #[error("integrity error for person `{person}`, task `{task}`: {reason}")]
    Integrity {
        person: String,
        task: String,
        reason: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("specification mismatch: {0}")]
    SpecMismatch(String),

    #[error("coverage error: {0}")]
    Coverage(String),

    #[error("at least 2 retained draws are required, found {available}")]
    InsufficientDraws { available: usize },

    #[error("malformed draws directory: {0}")]
    Format(String),

    #[error("sampler aborted at iteration {iteration} (chain {chain}): {source}")]
    Sampler {
        chain: usize,
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn npd(what: impl Into<String>) -> Self {
        Error::NonPositiveDefinite { what: what.into() }
    }
}
