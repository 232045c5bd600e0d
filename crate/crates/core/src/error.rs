//! Crate-wide error type and the process exit codes used by the CLI.

use thiserror::Error;

/// Errors produced by any stage of the restoration pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// An image, map, or mask has dimensions incompatible with its peer.
    #[error("dimension mismatch: {context} (expected {expected}, got {actual})")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    /// A parameter or configuration value is outside its documented range.
    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    /// A NaN or infinity was detected where finite values are required.
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    /// Airlight estimation failed (all-black image, empty scribble mask,
    /// or a zero color component).
    #[error("airlight estimation failed: {0}")]
    Airlight(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),

    /// Malformed file contents (bad PFM header, bad config line, ...).
    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Process exit code for the CLI: 2 invalid config, 3 i/o failure,
    /// 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DimensionMismatch { .. } | Error::InvalidParam(_) | Error::Airlight(_) => 2,
            Error::Io(_) | Error::Image(_) | Error::Format(_) => 3,
            Error::NonFinite(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_mismatch(
    context: &'static str,
    expected: impl std::fmt::Display,
    actual: impl std::fmt::Display,
) -> Error {
    Error::DimensionMismatch {
        context,
        expected: expected.to_string(),
        actual: actual.to_string(),
    }
}
