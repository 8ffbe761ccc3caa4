use thiserror::Error;

/// Errors produced by the quantization toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed file contents (bad magic, header/payload disagreement, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Structurally valid input carrying unusable values (NaN/Inf payloads).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid argument or shape mismatch between operands.
    #[error("argument error: {0}")]
    Argument(String),

    /// Cholesky factorization hit a non-positive pivot.
    #[error("matrix is not positive definite: pivot {pivot} at index {index}")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("i/o error")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
