use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("context error: {0}")]
    Context(String),

    #[error("arity mismatch: expected {expected}, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("parse error at {line}:{col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },

    /// The system violates a structural assumption (weights, homogeneity, rank).
    #[error("invalid system: {0}")]
    InvalidSystem(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// A numeric routine could not meet its tolerance.
    #[error("numeric failure: {reason} (error estimate {estimate:e})")]
    Tolerance { reason: String, estimate: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("internal inconsistency: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable tag used in JSON reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Context(_) => "context",
            Error::Arity { .. } => "arity",
            Error::Parse { .. } => "parse",
            Error::InvalidSystem(_) => "invalid_system",
            Error::Index(_) => "index",
            Error::Unsupported(_) => "unsupported",
            Error::Tolerance { .. } => "tolerance",
            Error::Domain(_) => "domain",
            Error::Inconsistent(_) => "inconsistent",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
