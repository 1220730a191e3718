use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    /// A numeric parameter fell outside its admissible range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Two objects that must share a universe do not.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// A universe index was outside `0..N`.
    #[error("universe index {index} out of range for universe of size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    /// `x` has mass where `y` has none, so relative entropy is infinite.
    #[error("support violation at index {0}: x > 0 but y = 0")]
    SupportViolation(usize),

    /// Time went backwards, or an event arrived out of `(t, j)` order.
    #[error("time regression: {0}")]
    TimeRegression(String),

    /// The state machine has halted and accepts no more queries.
    #[error("state machine halted")]
    Halted,

    /// Brute-force enumeration would exceed the configured cap.
    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    /// Malformed stream file or configuration.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
