use thiserror::Error;

/// Errors produced by the numerical core.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Two objects that must share a shape do not.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// The linear-program solver failed.
    #[error("LP solver failed after {iterations} iterations: {reason}")]
    Solver { iterations: usize, reason: String },

    /// An experiment configuration failed validation.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A Monte Carlo replicate failed at run time.
    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
