use plap_core::error::Error as CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("check failed: {0}")]
    Criterion(String),

    #[error("{0}")]
    Core(#[from] CoreError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 0 success, 1 failed check, 2 bad configuration, 3 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Criterion(_) | CliError::Io(_) => 1,
            CliError::Core(e) => match e {
                CoreError::Config(_)
                | CoreError::Domain(_)
                | CoreError::SingularGradient { .. }
                | CoreError::Undefined { .. }
                | CoreError::MissingDerivative { .. } => 2,
                CoreError::NonConvergence { .. }
                | CoreError::MonotonicityViolation { .. }
                | CoreError::BracketViolation { .. }
                | CoreError::Calibration(_)
                | CoreError::AllCapped => 3,
                _ => 1,
            },
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(std::io::Error::other(e.to_string()))
    }
}
