//! Error type shared by every module.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("unsupported regime: {0}")]
    Unsupported(String),

    #[error("capability unavailable: {0}")]
    Capability(String),

    #[error("CFL violation: {0}")]
    Cfl(String),

    #[error("non-finite value at t = {t}")]
    NonFinite { t: f64 },

    #[error("no convergence after {iters} iterations (last update {last_update:.3e})")]
    Convergence {
        iters: usize,
        last_update: f64,
        history: Vec<f64>,
        last: Option<Box<crate::phasecore::SpatialField>>,
    },

    #[error("eigensolver failure: {0}")]
    Eigen(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("operator norm estimate diverged (unbounded)")]
    Unbounded,

    #[error("non-contraction at eps0 = {eps0}: factors {factors:?}")]
    NonContraction { eps0: f64, factors: Vec<f64> },

    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),

    #[error("format: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
