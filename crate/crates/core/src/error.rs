use thiserror::Error;

/// Errors raised by the dynamics, tower and estimator layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("x = {x} lies outside [0, 1]")]
    OutOfDomain { x: f64 },

    #[error("x = {x} is a branch endpoint of the base map")]
    BranchEndpoint { x: f64 },

    #[error("x = {x} is a singular point of the fibre map")]
    Singularity { x: f64 },

    #[error("orbit reaches an excluded point at iterate {index} (x = {x})")]
    ExcludedIterate { index: usize, x: f64 },

    #[error("x = {x} is not in the base (0, 1/2)")]
    NotInBase { x: f64 },

    #[error("x = {x} lies on the cell boundary a_{level}")]
    CellBoundary { x: f64, level: u32 },

    #[error("cell {level} lies beyond the truncation level {max}")]
    Truncated { level: u32, max: u32 },

    #[error("level {level} is not below the return time {return_time}")]
    InvalidLevel { level: u32, return_time: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "power iteration did not converge in {iterations} iterations \
         (last estimate {estimate}, residual {residual:e})"
    )]
    NoConvergence {
        iterations: usize,
        estimate: f64,
        residual: f64,
    },

    #[error("noise floor reached at lag {lag}")]
    NoiseFloor { lag: usize },

    #[error("configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
