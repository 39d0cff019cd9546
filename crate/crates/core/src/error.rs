use thiserror::Error;

/// Errors surfaced by the numeric core.
#[derive(Debug, Error)]
pub enum Error {
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("matrix is not symmetric at ({row},{col}): {left} vs {right}")]
    NotSymmetric {
        row: usize,
        col: usize,
        left: f64,
        right: f64,
    },

    #[error("non-finite entry at ({row},{col})")]
    NonFinite { row: usize, col: usize },

    #[error("eigensolver failed to converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("degenerate random direction after {attempts} resample attempts")]
    DegenerateDirection { attempts: usize },

    #[error("preconditioner is not positive definite (r'Pr = {0} <= 0)")]
    IndefinitePreconditioner(f64),

    #[error("conjugate gradient breakdown: p'Ap = {0} <= 0")]
    BreakdownZeroCurvature(f64),

    #[error("zero denominator in {0}")]
    ZeroDenominator(String),
}

pub type Result<T> = std::result::Result<T, Error>;
