use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parent labels are required for {0}")]
    LabelsRequired(&'static str),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("row {row}, column '{column}': {message}")]
    Ingestion {
        row: usize,
        column: String,
        message: String,
    },

    #[error("non-finite log posterior ({value}) at iteration {iteration}")]
    NonFinite { iteration: usize, value: f64 },

    #[error("count cache diverged from recount: {0}")]
    CacheInconsistent(String),

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

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
