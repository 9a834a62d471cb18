use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid specification: {0}")]
    InvalidSpec(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    #[error("numerical procedure did not converge: {what} (residual {residual:e})")]
    Numeric { what: String, residual: f64 },

    #[error("singular state: {0}")]
    SingularState(String),

    #[error("observable is not centered: weighted mean {0:e}")]
    NotCentered(f64),

    #[error("no spectral gap: operator norm {0} on the mean-zero subspace")]
    NoSpectralGap(f64),

    #[error("power iteration did not converge after {iterations} iterations; last estimates {history:?}")]
    NonConvergence { iterations: usize, history: Vec<f64> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("under-resolved grid: {0}")]
    Resolution(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
