use std::io;

use thiserror::Error;

/// Errors raised by the codec, the entropy coder and the training loop.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("operation unsupported for architecture {0}")]
    UnsupportedArchitecture(&'static str),

    #[error("non-finite values produced by layer {layer}")]
    NonFinite { layer: String },

    #[error("symbol {symbol} outside table support [{min}, {max}] and escapes are disabled")]
    SymbolOutOfRange { symbol: i32, min: i32, max: i32 },

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("model mismatch: stream fingerprint {stream:016x}, model fingerprint {model:016x}")]
    ModelMismatch { stream: u64, model: u64 },

    #[error("training diverged at step {step}: {reason}")]
    Diverged {
        step: usize,
        reason: String,
        /// Weights before the failing step.
        checkpoint: Box<crate::model::ModelWeights>,
    },

    #[error("malformed weights file: {0}")]
    MalformedWeights(String),

    #[error("image decoding failed: {0}")]
    Image(#[from] image::ImageError),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(
    context: &'static str,
    expected: impl std::fmt::Debug,
    actual: impl std::fmt::Debug,
) -> Error {
    Error::ShapeMismatch {
        context,
        expected: format!("{expected:?}"),
        actual: format!("{actual:?}"),
    }
}
