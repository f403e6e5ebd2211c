use thiserror::Error;

use crate::measures::DiscreteMeasure;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("potential is not integrable: {0}")]
    NotIntegrable(String),

    #[error("reference measure has empty effective support")]
    EmptySupport,

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("problem size {size} exceeds the guard of {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("{solver} did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged {
        solver: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// The proximal step stopped before meeting its tolerance. The best iterate is kept.
    #[error("JKO step did not converge after {iterations} iterations (residual {residual:e})")]
    StepNotConverged {
        best: Box<DiscreteMeasure>,
        iterations: usize,
        residual: f64,
    },

    #[error("unstable configuration: {0}")]
    Unstable(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
