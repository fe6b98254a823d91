use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("shape mismatch: expected {expected} samples, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("unknown preset `{0}`")]
    UnknownPreset(String),
    #[error("invalid initial data: {0}")]
    InvalidData(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("singular point: {0}")]
    Singular(String),
    #[error("quadrature singular: {0}")]
    QuadratureSingular(String),
    #[error("parameter error: {0}")]
    Parameter(String),
    #[error("support escapes the grid: {0}")]
    Truncation(String),
    #[error("model/domain mismatch: {0}")]
    Spec(String),
    #[error("non-finite values produced at t = {t}")]
    NanDetected { t: f64 },
    #[error("normalization error: {0}")]
    Normalization(String),
    #[error("sign error: {0}")]
    Sign(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("unreliable estimate: {0}")]
    UnreliableEstimate(String),
    #[error("inapplicable: {0}")]
    Inapplicable(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        Err(Error::Shape { expected, got })
    } else {
        Ok(())
    }
}
