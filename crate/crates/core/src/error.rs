use thiserror::Error;

/// Errors produced by the simulation and analysis routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("bisection bracket invalid: beta = {beta} must be > -1")]
    BracketInvalid { beta: f64 },

    #[error("root residual {residual:e} still above tolerance {tol:e} after {iterations} iterations")]
    ToleranceNotReached {
        residual: f64,
        tol: f64,
        iterations: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("replica count k = {k} must be >= 2")]
    InvalidK { k: usize },

    #[error("site index {index} out of range for lattice of {len} sites")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("tangent vector collapsed to zero norm at micro-step {step}")]
    TangentCollapse { step: u64 },

    #[error("non-positive value {value} at t = {t} inside a fit window")]
    NonPositiveValue { t: u64, value: f64 },

    #[error("fit window holds {points} points; at least {min} required")]
    WindowTooSmall { points: usize, min: usize },

    #[error("rescaled curves overlap over less than one decade ({lo} .. {hi})")]
    InsufficientOverlap { lo: f64, hi: f64 },

    #[error("series time grids differ; cannot merge")]
    GridMismatch,

    #[error("validation error: {0}")]
    Validation(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// Process exit code for the CLI: 2 validation, 3 numerical, 4 i/o.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) => 2,
            Error::Io(_) => 4,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
