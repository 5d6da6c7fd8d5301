use thiserror::Error;

/// Errors produced across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("axis {axis} out of range for a tensor with {ndim} axes")]
    AxisOutOfRange { axis: usize, ndim: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("factor {axis} is not square ({rows}x{cols})")]
    NotSquare { axis: usize, rows: usize, cols: usize },

    #[error("factor {axis} is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { axis: usize, asymmetry: f64 },

    #[error("Kronecker-sum spectrum is not positive (min eigenvalue sum {min_eigen_sum:e})")]
    NotPositiveDefinite { min_eigen_sum: f64 },

    #[error("dense construction of size {size} exceeds guard {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("feature slice {slice} along axis {axis} is constant")]
    DegenerateFeature { axis: usize, slice: usize },

    #[error("no positive-definite step found at iteration {iteration} (step {step:e})")]
    StepUnderflow { iteration: usize, step: f64 },

    #[error("precision solver failed at outer iteration {iteration}: {source}")]
    Solver {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("assortativity undefined: all edge endpoints share one category")]
    UndefinedAssortativity,

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
