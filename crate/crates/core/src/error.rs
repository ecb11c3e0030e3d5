use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Refinement did not reach the requested tolerance. The best estimate is
    /// attached so callers can decide whether it is usable.
    #[error("accuracy failure: {message} (estimate {estimate:e}, error estimate {error:e})")]
    Accuracy { message: String, estimate: f64, error: f64 },

    #[error("solver failure: {message} (condition estimate {condition:e})")]
    Solver { message: String, condition: f64 },

    #[error("fixed-point iteration diverged after {iterations} iterations (Q = {q:e}, {nodes} grid nodes)")]
    Divergence { iterations: usize, q: f64, nodes: usize },

    #[error("degenerate configuration: {0}")]
    Degenerate(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
