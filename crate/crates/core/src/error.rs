use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("matrix columns are not orthonormal (max |BᵀB - I| = {deviation:e})")]
    NotOrthonormal { deviation: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("conjugate gradient did not converge in {iterations} iterations (relative residual {residual:e})")]
    CgNotConverged { iterations: usize, residual: f64 },

    #[error("singular U-update system: {0}")]
    SingularSystem(String),

    #[error("QR step received a rank-deficient matrix (|R_kk| = {pivot:e} at column {column}); the iteration diverged")]
    RankDeficient { column: usize, pivot: f64 },

    #[error("eigendecomposition failed: {0}")]
    Eigen(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("ground truth required: {0}")]
    MissingGroundTruth(&'static str),

    #[error("bad instance file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape(rows: usize, cols: usize) -> String {
    format!("{rows}x{cols}")
}
