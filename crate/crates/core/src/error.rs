use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("grid size {0} is too small (need n >= 8)")]
    GridTooSmall(usize),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value at index {index}: {value}")]
    NonFinite { index: usize, value: f64 },

    #[error("densities live on different grids (n = {0} vs n = {1})")]
    GridMismatch(usize, usize),

    #[error("unknown builtin potential {0:?}")]
    UnknownPotential(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("negative divergence {0:e} (normalization bug?)")]
    NegativeDivergence(f64),

    #[error("flow diverged at t = {t}: {reason}")]
    Diverged { t: f64, reason: String },

    #[error("stepsize {eps:e} exceeds the explicit diffusion limit {limit:e} for h = {h:e}")]
    CflViolation { eps: f64, limit: f64, h: f64 },

    #[error("trace and cumulant table were built from different (rho0, pi) pairs")]
    FingerprintMismatch,

    #[error("divergence is not positive at t = {t} (value {value:e})")]
    NonPositiveDivergence { t: f64, value: f64 },

    #[error("io: {0}")]
    Io(String),

    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(index) => Err(Error::NonFinite {
            index,
            value: values[index],
        }),
        None => Ok(()),
    }
}
