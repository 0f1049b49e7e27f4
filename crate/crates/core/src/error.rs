use thiserror::Error;

/// Errors produced by the quantization, channel, allocation and simulation layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("index {index} out of range for {bits}-bit mapping")]
    IndexOutOfRange { index: usize, bits: u32 },

    #[error("bit string has length {got}, expected {expected}")]
    BitLength { got: usize, expected: usize },

    #[error("invalid bit value {0} (expected 0 or 1)")]
    InvalidBit(u8),

    #[error("invalid codebook index {index} (bank holds {count} codebooks)")]
    InvalidCodebook { index: usize, count: usize },

    #[error("invalid modulation order {0}: must be even and at least 2")]
    InvalidModOrder(u32),

    #[error("invalid probability: {0}")]
    InvalidProbability(String),

    #[error("BER target {target} unreachable for {m}-bit QAM (maximum {max})")]
    UnreachableTarget { target: f64, m: u32, max: f64 },

    #[error("no downgrade candidate: every sub-vector already uses codebook 0")]
    NoCandidate,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
