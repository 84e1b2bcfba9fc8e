use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A point or value lies outside the domain it is supposed to live in.
    #[error("domain error: {0}")]
    Domain(String),

    /// Invalid or unsupported configuration.
    #[error("configuration error: {0}")]
    Config(String),

    /// Shapes of two operands disagree.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A documented precondition of an operation does not hold.
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// Cholesky failed after the whole jitter ladder was tried.
    #[error("matrix not positive definite (n = {size}, last jitter = {jitter:e}, min diagonal = {min_diag:e})")]
    NotPositiveDefinite { size: usize, jitter: f64, min_diag: f64 },

    /// Some computation produced NaN or infinity.
    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// The file was readable but its contents are not an accepted image.
    #[error("unsupported image format in {path}: {reason}")]
    ImageFormat { path: PathBuf, reason: String },
}
