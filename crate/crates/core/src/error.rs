use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("Hermite-Gaussian order {order} exceeds the supported maximum {max}")]
    OrderOverflow { order: usize, max: usize },

    #[error("eigensolver failure: {0}")]
    Solver(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("arm {arm} detects zero mean power")]
    ZeroMeanPower { arm: u8 },

    #[error("mask calibration did not converge after {iterations} iterations (objective {objective:e})")]
    NonConvergence { iterations: usize, objective: f64 },

    #[error("spectrum has no entry for mode ({m}, {n})")]
    MissingIndex { m: usize, n: usize },

    #[error("index sets differ: {0}")]
    IndexMismatch(String),

    #[error("spectrum has no positive eigenvalue")]
    EmptySpectrum,

    #[error("config: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Format { path: String, line: usize, message: String },

    #[error("output directory {0} is locked by another run")]
    Locked(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidParameter { .. } => 2,
            Error::Format { .. } | Error::Io(_) | Error::Locked(_) => 4,
            _ => 3,
        }
    }
}

pub(crate) fn require_positive(name: &'static str, value: f64) -> Result<f64> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(Error::invalid(name, format!("must be finite and > 0, got {value}")))
    }
}
