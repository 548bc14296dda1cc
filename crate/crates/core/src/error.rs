use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A row of an input file could not be accepted.
    #[error("{msg} at line {line}")]
    Parse { line: u64, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("invalid model specification: {0}")]
    InvalidSpec(String),

    /// The variance recursion produced a non-finite value.
    #[error("non-finite {quantity} on {date}")]
    NonFinite { quantity: &'static str, date: NaiveDate },

    /// No optimizer start converged; carries the per-start diagnostics.
    #[error("estimation failed: {0}")]
    Estimation(Box<crate::estimation::EstimationFailure>),

    #[error("singular information matrix ({0}); parameters may sit on a boundary or be unidentified")]
    Singular(String),

    /// Transport-level failure; the same request may succeed later.
    #[error("network error (retriable): {0}")]
    Network(String),

    /// The endpoint answered, but not with the expected payload.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_retriable(&self) -> bool {
        matches!(self, Error::Network(_))
    }
}
