use std::io;

use thiserror::Error;

/// Errors produced by the numerical kernels, data loaders and trainers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("iteration did not converge after {iterations} sweeps")]
    NumericFailure { iterations: usize },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(String),

    #[error("unexpected IDX magic number 0x{observed:08x} (expected 0x{expected:08x})")]
    Format { observed: u32, expected: u32 },

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("training diverged; last finite epoch was {last_finite_epoch}")]
    Diverged { last_finite_epoch: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn precondition(msg: impl Into<String>) -> Error {
    Error::Precondition(msg.into())
}

pub(crate) fn shape(msg: impl Into<String>) -> Error {
    Error::Shape(msg.into())
}
