use thiserror::Error;

/// Errors raised by samplers, planners and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid target: {0}")]
    InvalidTarget(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("schedule violation: {0}")]
    ScheduleViolation(String),
    #[error("loss of precision: {0}")]
    Precision(String),
    #[error("singular Gaussian fit: {0}")]
    SingularFit(String),
    #[error("cannot fit: {0}")]
    Fit(String),
    #[error("configuration error: {0}")]
    Configuration(String),
}

pub type Result<T> = std::result::Result<T, Error>;
