//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An operator evaluation left the representable range (overflow/NaN).
    /// Carries the norm of the offending input state.
    #[error("numeric range exceeded in {context}: input H-norm {norm:.6e}")]
    NumericRange { context: String, norm: f64 },

    /// Implicit step did not converge after local retries. Carries the
    /// residual history of the last Newton attempt.
    #[error("implicit step failed at t={t:.6e} (dt={dt:.6e}): {reason}; residuals {history:?}")]
    StepFailed {
        t: f64,
        dt: f64,
        reason: String,
        history: Vec<f64>,
    },

    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    #[error("jacobian evaluation failed: {0}")]
    Jacobian(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}
