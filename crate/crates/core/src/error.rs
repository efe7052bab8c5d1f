use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("degenerate interval (radius {0})")]
    DegenerateInterval(f64),
    #[error("empty span ({0}, {1})")]
    EmptySpan(f64, f64),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite integrand value {value} at node {node}")]
    NonFinite { node: f64, value: f64 },
    #[error("too few scales: {0} (need at least 3)")]
    TooFewScales(usize),
    #[error("resolution: {0}")]
    Resolution(String),
    #[error("insufficient lattice: {0}")]
    InsufficientLattice(String),
    #[error("{0}")]
    Io(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter(msg()))
    }
}
