use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("partition horizons differ: {0} vs {1}")]
    HorizonMismatch(f64, f64),

    #[error("step-size condition violated: step {step} times omega {omega} must be below {limit}")]
    StepSizeCondition { step: f64, omega: f64, limit: f64 },

    #[error("resolvent failed: {0}")]
    ResolventFailure(String),

    #[error("operator is not accretive of the declared type: {0}")]
    NotAccretive(String),

    #[error("operator does not expose its value sets")]
    UnsupportedOperator,

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

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
