use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("invalid incidence function: {0}")]
    InvalidIncidence(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid transition rate q[{row}][{col}] = {value}")]
    InvalidRate { row: usize, col: usize, value: f64 },

    #[error("invalid generator: {0}")]
    InvalidGenerator(String),

    #[error("generator is reducible: regime {from} cannot reach regime {to}")]
    Reducible { from: usize, to: usize },

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("step size underflow at t = {t:e} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("regime {regime} has R0 = {r0} <= 1, no endemic equilibrium")]
    NoEndemicEquilibrium { regime: usize, r0: f64 },

    #[error("no regime admits an endemic equilibrium to seed the reachable set")]
    CannotSeedGamma,

    #[error("disease is not persistent: weighted drift {0} <= 0")]
    NotPersistent(f64),

    #[error("incompatible histograms: {0}")]
    IncompatibleHistograms(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("path {index}: {source}")]
    Path { index: usize, source: Box<Error> },
}

impl Error {
    pub fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }

    /// True for failures raised by the ODE integrator, including when
    /// wrapped with a path index.
    pub fn is_integrator_failure(&self) -> bool {
        match self {
            Error::StepSizeUnderflow { .. } => true,
            Error::Path { source, .. } => source.is_integrator_failure(),
            _ => false,
        }
    }
}
