use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point {point:?} lies outside the domain closure")]
    OutsideDomain { point: Vec<f64> },

    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch { expected: Vec<usize>, found: Vec<usize> },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("iterative solve did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("refused: {0}")]
    CostGuard(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed field file: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
