use thiserror::Error;

/// Errors raised by the simulation library.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("time grid too short: envelope at the grid edge is {edge_ratio:.3e} of peak; need half-width of at least {required_half_width:.3} fs")]
    GridTooShort {
        edge_ratio: f64,
        required_half_width: f64,
    },

    #[error("time step {step:.4e} fs too coarse; must not exceed {max_step:.4e} fs")]
    StepTooCoarse { step: f64, max_step: f64 },

    #[error("step size underflow at t = {time:.6} fs (h = {step:.3e} fs)")]
    StepUnderflow { time: f64, step: f64 },

    #[error("norm drift {drift:.3e} exceeds limit at t = {time:.6} fs")]
    NormDrift { time: f64, drift: f64 },

    #[error("density matrix lost positivity at t = {time:.6} fs (eigenvalue {eigenvalue:.3e})")]
    NegativePopulation { time: f64, eigenvalue: f64 },

    #[error("k0 window error: {0}")]
    KWindow(String),

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("config error at line {line}, column {column}: {message}")]
    Config {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
