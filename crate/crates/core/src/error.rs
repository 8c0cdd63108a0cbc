use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        actual: String,
    },

    #[error("matrix is singular (pivot magnitude {pivot:e} below threshold)")]
    SingularMatrix { pivot: f64 },

    #[error("model has not been initialized")]
    NotInitialized,

    #[error("initial chunk has {rows} rows but at least {hidden} (hidden nodes) are required")]
    InitTooSmall { rows: usize, hidden: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("requested {requested} samples but only {available} are available")]
    InsufficientSamples { requested: usize, available: usize },

    #[error("packet index {index} out of range (limit {limit})")]
    IndexOverflow { index: u64, limit: u64 },

    #[error("AUC requires both positive and negative labels")]
    SingleClass,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(op: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            op,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
