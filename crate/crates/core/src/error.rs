use thiserror::Error;

/// Errors raised by the numerical pipeline.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature did not reach tolerance {requested:e} (estimated error {achieved:e}){context}")]
    Accuracy {
        requested: f64,
        achieved: f64,
        context: String,
    },

    #[error("norm drift {drift:e} exceeds {limit:e}; reduce the time step (dt = {dt} ps)")]
    NormDrift { drift: f64, limit: f64, dt: f64 },

    #[error("empty basis block: {0}")]
    EmptyBlock(String),

    #[error("Coulomb table has no entry for <{0} {1}|V|{2} {3}>")]
    CacheMiss(usize, usize, usize, usize),

    #[error("matrix is not Hermitian (max asymmetry {0:e})")]
    NotHermitian(f64),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("unknown gate '{0}'")]
    UnknownGate(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("optimizer initialisation failed: {0}")]
    Optimizer(String),

    #[error("no crossing found: {0}")]
    NoCrossing(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
