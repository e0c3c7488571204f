use thiserror::Error;

/// Errors raised anywhere in the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("box too small: {0}")]
    BoxTooSmall(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("solver did not converge after {iterations} iterations (last change {last_change:.3e})")]
    NonConvergence { iterations: usize, last_change: f64 },

    #[error("iteration collapsed to the zero state (norm {norm:.3e})")]
    Collapse { norm: f64 },

    #[error("non-finite field detected at t = {t}")]
    BlowUp { t: f64 },

    #[error("spectrum window too small: {0}")]
    SpectrumWindow(String),

    #[error("non-positive value in rate fit at index {index}: {value}")]
    NonPositive { index: usize, value: f64 },

    #[error("not enough samples for a fit: got {got}, need {need}")]
    TooFewSamples { got: usize, need: usize },

    #[error("malformed field container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
