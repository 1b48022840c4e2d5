use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("branch index {j} is not available in zone {zone}")]
    InvalidBranch { j: i32, zone: String },
    #[error("k = {k} is not above the threshold kappa_{n} = {kappa}")]
    BelowThreshold { n: usize, k: f64, kappa: f64 },
    #[error("root bracketing failed: {0}")]
    Bracket(String),
    #[error("branch continuation failed: {0}")]
    Trace(String),
    #[error("insufficient range: {0}")]
    Range(String),
    #[error("grid too coarse: {0}")]
    Resolution(String),
    #[error("grid error: {0}")]
    Grid(String),
    #[error("matrix size {size} exceeds the configured cap {cap}")]
    Capacity { size: usize, cap: usize },
    #[error("eigensolver failure: {0}")]
    Eigen(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("forcing frequency {omega_s} is within {distance} of the exceptional set")]
    Refused { omega_s: f64, distance: f64 },
    #[error("misuse: {0}")]
    Misuse(String),
    #[error("no guided modes: slab light speed {c1} is not below the cladding light speed {c}")]
    NoGuiding { c1: f64, c: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
