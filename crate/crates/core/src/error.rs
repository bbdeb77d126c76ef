use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension {0}: must be at least 1")]
    InvalidDimension(usize),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },

    /// A probe of the objective returned a non-finite loss. `coordinate` is
    /// the probed coordinate for coordinate-wise estimates and the direction
    /// index for randomized ones.
    #[error("gradient estimation failed at probe {coordinate}: loss = {loss}")]
    EstimationFailure { coordinate: usize, loss: f64 },

    #[error("covariance matrix is degenerate: {0}")]
    CovarianceDegenerate(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid window: {0}")]
    WindowInvalid(String),

    #[error("objective failure at step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }
}
