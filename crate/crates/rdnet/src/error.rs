//! Error types, one family per subsystem.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum AutodiffError {
    #[error("dimension error: {0}")]
    Shape(String),
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("non-finite loss at epoch {0}")]
    NonFiniteLoss(u32),
    #[error("empty {0} set")]
    EmptySet(&'static str),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Error)]
pub enum CodecError {
    #[error("QP out of range: {0} (expected 0..=51)")]
    QpOutOfRange(i64),
    #[error("invalid frame: {0}")]
    InvalidFrame(String),
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad magic: expected {expected}, found {found:?}")]
    BadMagic { expected: &'static str, found: [u8; 4] },
    #[error("unsupported format version {0}")]
    Version(u16),
    #[error("network kind mismatch: file holds {found}, expected {expected}")]
    KindMismatch { expected: String, found: String },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("malformed record ({0})")]
    MalformedRecord(String),
    #[error("manifest parse error at line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("data integrity: {0}")]
    Integrity(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("no usable patches were produced")]
    NoPatches,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("zero variance input (undefined correlation)")]
    ZeroVariance,
    #[error(transparent)]
    Data(#[from] DataError),
}
