use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("assumption violated: {0}")]
    Assumption(String),

    #[error("index error: {0}")]
    Index(String),

    #[error("non-finite state at step {step} (seed {seed})")]
    NonFinite { step: usize, seed: usize },

    #[error("flow inversion did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("query point lies outside the seed images at node {node}")]
    OutOfRange { node: usize },

    #[error("stability guard: {0}")]
    Stability(String),

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("{failures} of {samples} replicates failed flow inversion")]
    TooManyFailures { failures: usize, samples: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (as opposed to bad input or a violated assumption).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NoConvergence { .. }
                | Error::OutOfRange { .. }
                | Error::Stability(_)
                | Error::LinearSolve(_)
                | Error::TooManyFailures { .. }
        )
    }
}
