use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("topology is disconnected")]
    Disconnected,

    #[error("no connected geometric graph found after {attempts} attempts (base seed {seed})")]
    ConnectivityExhausted { seed: u64, attempts: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("block {index} is not positive definite")]
    NotPositiveDefinite { index: usize },

    #[error("non-finite value encountered in block {index}")]
    NonFinite { index: usize },

    #[error("solver {solver} diverged at iteration {iteration}: non-finite iterate")]
    Diverged { solver: String, iteration: usize },

    #[error("centralized Newton failed to reach tolerance after {iterations} iterations")]
    NewtonFailed { iterations: usize },

    #[error("{context}: {source}")]
    Solver {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("bad file format: {0}")]
    Format(String),
}

impl Error {
    /// Wraps an error with the name of the solver or stage it came from.
    pub fn in_context(self, context: impl Into<String>) -> Self {
        Error::Solver {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
