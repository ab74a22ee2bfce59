use thiserror::Error;

/// Errors raised by constructors and analyses.
///
/// Negative verdicts (a failed trapping certificate, a non-hyperbolic
/// classification, an inconclusive probe) are values, never errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not unimodular: det = {0}")]
    NotUnimodular(i64),

    #[error("ill-conditioned eigenbasis (condition {0:.3e})")]
    IllConditioned(f64),

    #[error("map construction failed: {0}")]
    Construction(String),

    #[error("evaluation produced a non-finite value at {0:?}")]
    NonFinite(Vec<f64>),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("no preimage found: {0}")]
    EmptyFiber(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
