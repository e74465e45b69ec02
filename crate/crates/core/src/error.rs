use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("dimension mismatch: expected {expected} joint values, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid state transition: {0}")]
    State(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("joint {joint} command {value} outside limits [{lo}, {hi}]")]
    OutOfLimits {
        joint: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
