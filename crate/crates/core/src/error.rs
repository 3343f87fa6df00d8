use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("bisection requires a sign change: f({lo}) = {flo}, f({hi}) = {fhi}")]
    NoSignChange { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("search budget exhausted: {0}")]
    SearchExhausted(String),
    #[error("iteration budget exceeded: {0}")]
    IterationBudget(String),
    #[error("invalid probability vector: {0}")]
    InvalidDistribution(String),
    #[error("idx file error: {0}")]
    Idx(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
