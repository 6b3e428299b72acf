use thiserror::Error;

/// Errors raised across the design and verification pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An input lies outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// A value failed validation (non-unitary matrix, malformed sequence, bad config field).
    #[error("validation error: {0}")]
    Validation(String),

    /// A constrained delay fell below the minimum allowed spacing.
    #[error("infeasible sequence: delay t[{index}] = {value} us is below the minimum {min_delay} us")]
    Infeasible {
        index: usize,
        value: f64,
        min_delay: f64,
    },

    /// No feasible start could be found, or every optimizer run failed.
    #[error("design failed: {0}")]
    DesignFailure(String),

    /// The requested bath is too large for the dense engine.
    #[error("capacity exceeded: {spins} bath spins, dense limit is {limit}")]
    Capacity { spins: usize, limit: usize },

    /// No candidate bath met the selection target.
    #[error("bath selection failed: {0}")]
    Selection(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
