use thiserror::Error;

/// Errors shared across the engine.
#[derive(Debug, Error)]
pub enum GxError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite input: {0}")]
    NonFinite(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    /// Explicit-scheme stability bound exceeded. `dt_max` is the largest
    /// admissible time step for the given grid and coefficients.
    #[error("CFL condition violated: dt = {dt:e} exceeds maximal admissible dt = {dt_max:e}")]
    CflViolation { dt: f64, dt_max: f64 },

    #[error("query outside safe margin: {0}")]
    OutsideMargin(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GxError>;
