use std::io;

use thiserror::Error;

/// Errors produced anywhere in the codec.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("file holds {actual} bytes, expected {expected}")]
    FileSizeMismatch { expected: u64, actual: u64 },

    #[error("resolution {width}x{height} is not divisible by patch {patch_w}x{patch_h}")]
    NonDivisibleResolution {
        width: usize,
        height: usize,
        patch_w: usize,
        patch_h: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("cannot build a frequency table from an empty tensor")]
    EmptyTensor,

    #[error("symbol {symbol} outside table range [{min}, {max}]")]
    SymbolOutOfRange { symbol: i64, min: i64, max: i64 },

    #[error("corrupt stream: {0}")]
    CorruptStream(String),

    #[error("bad magic bytes")]
    BadMagic,

    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),

    #[error("non-finite loss at iteration {iteration} (mse {mse}, entropy {entropy_bits} bits)")]
    NonFiniteLoss {
        iteration: usize,
        mse: f64,
        entropy_bits: f64,
    },

    #[error("need at least 2 frames, got {0}")]
    TooFewFrames(usize),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::ShapeMismatch(msg.into())
}
