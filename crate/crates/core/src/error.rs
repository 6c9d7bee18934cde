use thiserror::Error;

/// Errors raised anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum GslError {
    /// A configuration value is out of range or shapes do not line up.
    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    /// Input files are missing, malformed, or inconsistent.
    #[error("ingestion error: {0}")]
    Ingestion(String),

    /// A computation would exceed a configured budget.
    #[error("resource error: {0}")]
    Resource(String),

    /// Non-finite values or an iterative method failed to converge.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("power iteration did not converge after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    /// The computation record was already differentiated once.
    #[error("tape already consumed by a previous backward pass")]
    TapeConsumed,

    #[error("tensor belongs to tape {found}, expected tape {expected}")]
    ForeignTensor { expected: u64, found: u64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GslError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self::Config { field: field.into(), message: message.into() }
    }

    pub fn ingestion(message: impl Into<String>) -> Self {
        Self::Ingestion(message.into())
    }
}

pub type Result<T, E = GslError> = std::result::Result<T, E>;
