use thiserror::Error;

/// Errors produced by the toolkit.
///
/// The variants fall into four groups which the command-line front end maps
/// onto exit codes: validation/domain problems, numerical accuracy failures,
/// linear-algebra failures on the covariance (treated as validation), and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid covariance model: {0}")]
    InvalidModel(String),

    #[error("covariance derivative is singular at (t={t}, s={s})")]
    Singularity { t: f64, s: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("parameter outside its domain: {0}")]
    Domain(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("quadrature did not reach tolerance: estimate {estimate:.6e}, error bound {error:.6e}")]
    Accuracy { estimate: f64, error: f64 },

    #[error("computation exceeds budget: {0}")]
    Budget(String),

    #[error("covariance matrix is not positive definite after jitter {jitter:.3e}")]
    NotPositiveDefinite { jitter: f64 },

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("degenerate regression: {0}")]
    DegenerateFit(String),

    #[error("experiment failed: {0}")]
    Experiment(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Coarse classification used for exit codes and machine-readable reports.
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Accuracy { .. } => ErrorKind::Accuracy,
            Error::Io(_) => ErrorKind::Io,
            _ => ErrorKind::Validation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Accuracy,
    Io,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
