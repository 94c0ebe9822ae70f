use thiserror::Error;

#[derive(Debug, Error)]
pub enum CivrError {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("wavefunction grids differ: {0}")]
    GridMismatch(String),

    #[error("cannot renormalize a wavefunction with zero norm")]
    ZeroNorm,

    #[error("wavefunction does not decay at the grid edges (edge amplitude {amplitude:.3e})")]
    EdgeLeakage { amplitude: f64 },

    #[error("imaginary-time relaxation of state {state} did not converge after {iterations} iterations")]
    NotConverged { state: usize, iterations: usize },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

impl CivrError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        CivrError::InvalidParameter { name, reason: reason.into() }
    }
}

pub type Result<T> = std::result::Result<T, CivrError>;
