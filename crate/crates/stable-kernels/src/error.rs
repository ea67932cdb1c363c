//! Error type shared by every module.

use thiserror::Error;

/// Failures reported by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// A correlation argument fell outside `[-1, 1]` by more than the clamp tolerance.
    #[error("correlation {value} outside [-1, 1]")]
    Domain { value: f64 },

    /// A layer index outside `1..=depth` or beyond a custom scaling list.
    #[error("layer index {layer} invalid for depth {depth}")]
    Index { layer: usize, depth: usize },

    /// A precondition of the called operation does not hold.
    #[error("contract violation: {0}")]
    Contract(String),

    /// A kernel state for which the correlation is undefined.
    #[error("invalid kernel state: {0}")]
    InvalidState(String),

    /// A raw recursion left the range of finite 64-bit floats.
    #[error("kernel overflow at layer {layer}; use the correlation or normalized forms")]
    Overflow { layer: usize },

    /// Vector or matrix shapes do not agree.
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    /// Malformed dataset or scaling file.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    /// Cholesky factorization failed even after the jitter ladder.
    #[error("matrix not positive definite after jitter {jitter:e}; smallest eigenvalue {min_eigenvalue:e}")]
    Factorization { jitter: f64, min_eigenvalue: f64 },

    /// A computed quantity is NaN or infinite.
    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Attach the offending path to an I/O error.
pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}
