use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("point {point:?} lies outside the region where the field is defined")]
    Undefined { point: Vec<f64> },

    #[error("gradient vanishes at {point:?}; the normalized p-Laplacian is not defined there")]
    SingularGradient { point: Vec<f64> },

    #[error("field `{field}` lacks a {what} callback")]
    MissingDerivative { field: String, what: &'static str },

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("no convergence after {iterations} sweeps (last residual {last_residual:e})")]
    NonConvergence {
        iterations: usize,
        last_residual: f64,
        residual_history: Vec<f64>,
    },

    #[error("monotone iteration violated at sweep {sweep}, node {node}: dropped by {drop:e}")]
    MonotonicityViolation { sweep: usize, node: usize, drop: f64 },

    #[error("bracket violated at sweep {sweep}, node {node}: sub exceeds super by {excess:e}")]
    BracketViolation { sweep: usize, node: usize, excess: f64 },

    #[error("barrier calibration failed: {0}")]
    Calibration(String),

    #[error("strategy contract violated: {0}")]
    Strategy(String),

    #[error("no rollout terminated within the step cap")]
    AllCapped,

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
