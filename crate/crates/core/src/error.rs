use thiserror::Error;

/// Errors surfaced by the library layers.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("mode {mode} out of range for order-{order} tensor")]
    ModeOutOfRange { mode: usize, order: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("coordinate ({x}, {y}) outside the service area")]
    OutOfArea { x: f64, y: f64 },
    #[error("empty measurement database")]
    EmptyDatabase,
    #[error("linear system is not positive definite")]
    NotPositiveDefinite,
    #[error("linear solve residual {residual:e} exceeds tolerance {tol:e}")]
    SolveResidual { residual: f64, tol: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
