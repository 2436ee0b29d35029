use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    Dimension {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("SVD did not converge after {sweeps} sweeps")]
    SvdNonConvergence { sweeps: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("operation not supported for scheme {scheme}: {reason}")]
    Scheme { scheme: String, reason: String },

    #[error(
        "stale positional cache: built at version {cached}, parameters now at version {current}"
    )]
    StaleCache { cached: u64, current: u64 },

    #[error("invalid input: {0}")]
    Input(String),

    #[error("value error: {0}")]
    Value(String),

    #[error("training diverged at step {step}: loss {loss}")]
    Divergence { step: usize, loss: f64 },

    #[error("non-finite loss in layer {layer}")]
    NonFiniteLoss { layer: String },

    #[error("measurement error: {0}")]
    Measurement(String),

    #[error("archive error: {0}")]
    Archive(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
