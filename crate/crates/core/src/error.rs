use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("data error: {0}")]
    Data(String),

    #[error("fetch failed for {source_id}: {reason}")]
    Fetch { source_id: String, reason: String },

    #[error("digest mismatch for {path}: expected {expected}, got {got}")]
    DigestMismatch {
        path: PathBuf,
        expected: String,
        got: String,
    },

    #[error("could not draw a valid split after {attempts} attempts")]
    SplitRetries { attempts: usize },

    #[error("matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },

    #[error(
        "svm solver did not converge in {iterations} rounds \
         (support size {support_size}, max margin violation {max_violation:e})"
    )]
    SolverNotConverged {
        iterations: usize,
        support_size: usize,
        max_violation: f64,
    },

    #[error("bordered system is singular after jitter; try a smaller step or a larger lambda")]
    SingularSystem,

    #[error("optimization failed: {0}")]
    Optimization(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
