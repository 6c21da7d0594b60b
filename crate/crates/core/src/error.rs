use thiserror::Error;

/// Errors produced anywhere in the library.
///
/// The variants are split into precondition failures (bad input, bad
/// decomposition, budget exceeded) and numeric failures (non-SPD input,
/// solver non-convergence). The CLI maps the former to exit code 2 and the
/// latter to exit code 3.
#[derive(Debug, Error)]
pub enum Error {
    #[error("index ({row}, {col}) out of range for dimension {n}")]
    IndexOutOfRange { row: usize, col: usize, n: usize },

    #[error("non-finite value at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("diagonal entry {0} is missing or not strictly positive")]
    MissingDiagonal(usize),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("matrix is not positive definite (pivot {pivot} = {value:e} at column {column})")]
    NotPositiveDefinite { column: usize, pivot: usize, value: f64 },

    #[error("pair ({0}, {1}) is outside the factor fill pattern; re-analyze with an augmented pattern")]
    PairOutsidePattern(usize, usize),

    #[error("PCG did not converge in {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("division by zero accumulated probe weight at node {0}")]
    ZeroProbeWeight(usize),

    #[error("pair ({0}, {1}) spans two blocks; use overlapping blocks or a coarser decomposition")]
    PairSpansBlocks(usize, usize),

    #[error("decomposition error: {0}")]
    Decomposition(String),

    #[error("constraint matrix is rank deficient (A Q^-1 A^T not positive definite)")]
    RankDeficient,

    #[error("missing covariance entry ({0}, {1})")]
    MissingEntry(usize, usize),

    #[error("memory budget exceeded: estimated {estimated} bytes, budget {budget} bytes")]
    BudgetExceeded { estimated: usize, budget: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures caused by the numbers rather than the inputs' shape.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite { .. }
                | Error::NotConverged { .. }
                | Error::ZeroProbeWeight(_)
                | Error::RankDeficient
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
