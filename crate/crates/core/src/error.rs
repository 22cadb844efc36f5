use num_complex::Complex64;
use thiserror::Error;

use crate::timedisc::Method;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid time grid: {0}")]
    InvalidTimeGrid(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("shift {shift} collides with the Laplacian spectrum (gap {gap:e})")]
    SingularShift { shift: Complex64, gap: f64 },
    #[error("deflation by mu = 1 left remainder {remainder:e} (tolerance {tolerance:e})")]
    DeflationFailure { remainder: f64, tolerance: f64 },
    #[error("root finder did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("eigenvalues are not separated (min gap {min_gap:e}, tolerance {tolerance:e})")]
    NearDefectiveMatrix { min_gap: f64, tolerance: f64 },
    #[error("reconstruction has relative imaginary residue {ratio:e}")]
    NonRealReconstruction { ratio: f64 },
    #[error("direct factorization failed: {0}")]
    SingularFactorization(String),
    #[error("{0} has no Kronecker form; solve it with the all-at-once solver")]
    UnsupportedMethod(Method),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}
