use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("partition mismatch: {0}")]
    PartitionMismatch(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("empty input")]
    EmptyInput,

    #[error("dual face unbounded under g")]
    DualFaceUnbounded,

    #[error("KP violated at grid index {0}")]
    KpViolated(usize),

    #[error("covariance is not positive semidefinite (min eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("population cost not a fixed point (deviation {0:.3e})")]
    NotFixedPoint(f64),

    #[error("inadmissible direction: {0}")]
    Inadmissible(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("cost estimator failed in {failed} of {total} replicates")]
    EstimatorFailures { failed: usize, total: usize },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
