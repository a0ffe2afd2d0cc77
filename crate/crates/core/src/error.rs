use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),
    /// A documented precondition of the call does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unsupported operation: {0}")]
    Unsupported(String),
    /// The computation would exceed its configured budget.
    #[error("resource budget exceeded: {0}")]
    Resource(String),
    /// Only part of the requested result could be produced.
    #[error("partial result: found {found} of {requested} ({reason})")]
    Partial {
        found: usize,
        requested: usize,
        reason: String,
    },
    #[error("invalid experiment spec: {}", .0.join("; "))]
    Validation(Vec<String>),
    #[error("malformed data: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
