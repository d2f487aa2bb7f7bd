use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid MDP construction: {0}")]
    Construction(String),

    #[error("MDP generation failed after {attempts} attempts: {property}")]
    Generation { attempts: usize, property: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("chain structure: {0}")]
    Structure(String),

    #[error("tie tolerance rejected: {0}")]
    TieTolerance(String),

    #[error("linearity violation: {0}")]
    LinearityViolation(String),

    #[error("TD iterate diverged at iteration {iteration}, inner step {step}")]
    Divergence { iteration: usize, step: u64 },

    #[error("audit: {0}")]
    Audit(String),

    #[error("size limit: {0}")]
    Size(String),

    #[error("bad data: {0}")]
    Data(String),

    #[error("consistency mismatch: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
