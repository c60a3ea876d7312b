use thiserror::Error;

/// Errors raised across the surrogate, acquisition and harness layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel matrix is not positive definite after jitter escalation (last jitter {jitter:e})")]
    SingularKernel { jitter: f64 },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("no feasible candidate was generated")]
    NoFeasibleCentre,

    #[error("point {point:?} lies outside the bounds of benchmark `{benchmark}`")]
    OutOfBounds { benchmark: String, point: Vec<f64> },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("unknown benchmark `{0}`")]
    UnknownBenchmark(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
