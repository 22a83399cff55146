use std::io;

use thiserror::Error;

/// Errors raised across the clustering, optimisation and learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("matrix is not a valid distance matrix: {0}")]
    InvalidMatrix(String),

    #[error("Q_uu is not positive definite at step {step} (regularisation {reg:e})")]
    NotPositiveDefinite { step: usize, reg: f64 },

    #[error("box QP did not converge in {0} iterations")]
    BoxQpNoConvergence(usize),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("planner failed: {0}")]
    Planner(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
