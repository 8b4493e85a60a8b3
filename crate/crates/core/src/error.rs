use thiserror::Error;

pub type Result<T> = std::result::Result<T, VortexError>;

#[derive(Debug, Error)]
pub enum VortexError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("nonzero mean: |mean| = {mean:e} exceeds {limit:e} (data must be mean-zero on the torus)")]
    NonzeroMean { mean: f64, limit: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("value {value} outside the range of f^-1 ({lo}, {hi})")]
    InverseDomain { value: f64, lo: f64, hi: f64 },

    #[error("invalid vortex configuration: {0}")]
    InvalidVortices(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("exp(sigma + u) overflows: max u = {max_u:.3}, max(sigma + u) = {max_sigma_plus_u:.3}")]
    Overflow { max_u: f64, max_sigma_plus_u: f64 },

    #[error("line search failed after {iterations} iterations (energy {energy:e})")]
    LineSearch { iterations: usize, energy: f64 },

    #[error("path collapse: maximum node within {distance:e} of an endpoint")]
    PathCollapse { distance: f64 },

    #[error("no far endpoint below the local minimum energy down to shift {shift:e}")]
    NoFarEndpoint { shift: f64 },

    #[error("field file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
