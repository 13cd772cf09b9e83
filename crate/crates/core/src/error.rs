use thiserror::Error;

/// Errors raised by the solvers and diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// An input violates a documented precondition.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation produced a non-finite or singular intermediate.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// No positive scaling puts the state on the constraint set.
    #[error("projection failure: {0}")]
    Projection(String),

    /// A constrained component lost all its mass during a flow.
    #[error("collapse: {0}")]
    Collapse(String),

    /// The operation is not available for the requested geometry.
    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
