use thiserror::Error;

/// Errors raised across the simulator.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: String, got: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("sample vector has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },

    #[error("bit count {bits} is not compatible with {needed} bits")]
    BitCount { bits: usize, needed: usize },

    #[error("cannot scale noise for a zero-power signal")]
    ZeroPower,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("overhead {target} unreachable for {kind} pattern on a {m}x{n} grid")]
    UnreachableOverhead {
        kind: String,
        target: f64,
        m: usize,
        n: usize,
    },

    #[error("scheme mismatch: {0}")]
    Scheme(String),

    #[error("too few pilots: {0}")]
    TooFewPilots(String),

    #[error("{path}: {msg}")]
    ConfigKey { path: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::Dimension {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
