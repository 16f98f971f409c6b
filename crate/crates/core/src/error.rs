use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no data: {0}")]
    NoData(String),

    #[error("measurement unavailable in cycle {cycle}: {msg}")]
    MeasurementUnavailable { cycle: usize, msg: String },

    #[error("degenerate service rate: mu must be > 0")]
    DegenerateService,

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
