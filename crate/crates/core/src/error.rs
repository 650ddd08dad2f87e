use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid bounding box ({x_min}, {y_min}, {x_max}, {y_max})")]
    InvalidBox {
        x_min: f64,
        y_min: f64,
        x_max: f64,
        y_max: f64,
    },
    #[error("detection score {0} is outside [0, 1]")]
    InvalidScore(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no detections: {0}")]
    NoDetections(String),
    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },
    #[error("unknown character {ch:?} at position {position}")]
    UnknownSymbol { ch: char, position: usize },
    #[error("symbol id {id} is not a letter of an alphabet with {size} letters")]
    InvalidSymbolId { id: usize, size: usize },
    #[error("emission row {row} is not normalized (log-sum-exp {lse})")]
    Unnormalized { row: usize, lse: f64 },
    #[error("transcript of length {length} cannot be aligned to {frames} frames")]
    Infeasible { length: usize, frames: usize },
    #[error("empty {0}")]
    Empty(&'static str),
    #[error("record {0} has no fps tag")]
    MissingFps(String),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("{path}: {error}")]
    Io {
        path: PathBuf,
        error: std::io::Error,
    },
}

impl Error {
    pub(crate) fn shape(context: &'static str, expected: impl ToString, actual: impl ToString) -> Self {
        Error::ShapeMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
