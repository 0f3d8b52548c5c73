use thiserror::Error;

/// Error type shared by every solver and I/O path in this crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("non-finite evaluation: {0}")]
    NonFinite(String),

    #[error("displacement exceeds the velocity window: {0}; widen radius_steps")]
    OutOfWindow(String),

    #[error("invalid problem specification: {0}")]
    InvalidSpec(String),

    #[error(
        "value iteration did not converge in {iterations} sweeps \
         (last residual {last_residual:e})"
    )]
    NonConvergence {
        iterations: usize,
        last_residual: f64,
        residual_history: Vec<f64>,
    },

    #[error("coupled iteration did not converge in {iterations} outer steps")]
    OuterNonConvergence {
        iterations: usize,
        d1_history: Vec<f64>,
    },

    #[error("orbit too short: need more than {needed} steps, got {got}")]
    OrbitTooShort { needed: usize, got: usize },

    #[error(
        "calibration defect {defect:e} exceeds {limit:e}; \
         the value function is not converged enough"
    )]
    Calibration { defect: f64, limit: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
