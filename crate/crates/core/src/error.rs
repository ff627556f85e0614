//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("time must be positive, got {0}")]
    NonPositiveTime(f64),
    #[error("model is singular: {0}")]
    SingularModel(String),
    #[error("grid is not strictly increasing at position {0}")]
    GridNotSorted(usize),
    #[error("grid contains duplicate points at position {0}")]
    DegenerateGrid(usize),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("direction vector must have at least one positive entry")]
    InvalidDirection,
    #[error("no feasible index set found; this indicates a solver bug on valid input")]
    NoFeasibleIndexSet,
    #[error("quadratic program failed at t={t}: {source}")]
    QpAtTime {
        t: f64,
        #[source]
        source: Box<Error>,
    },
    #[error("dimension {0} exceeds the enumeration limit {1}")]
    DimensionTooLarge(usize, usize),
    #[error("assumption violated: {0}")]
    AssumptionViolated(String),
    #[error("covariance factorization failed even with maximal jitter")]
    FactorizationFailed,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed model spec at {pointer}: {message}")]
    MalformedSpec { pointer: String, message: String },
    #[error("failed to write report: {0}")]
    WriteFailure(#[from] std::io::Error),
    #[error("csv encoding failed: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
