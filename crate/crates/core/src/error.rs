//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("geometry mismatch: {0}")]
    GeometryMismatch(String),

    #[error("Fourier window too small: cutoff {r_cut} cycles/mm exceeds max on-axis frequency {max_freq} cycles/mm")]
    InsufficientResolution { r_cut: f64, max_freq: f64 },

    #[error("degenerate data: extracted matrix has (near-)zero trace")]
    ZeroTrace,

    #[error("non-physical density matrix: {0}")]
    NonPhysical(String),

    #[error("all-zero coefficient vector")]
    AllZeroCoefficients,

    #[error("fit rejected: {0}")]
    FitDiverged(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the CLI: 2 config/spec, 3 geometry, 4 degenerate data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::GeometryMismatch(_) | Error::InsufficientResolution { .. } => 3,
            Error::ZeroTrace | Error::FitDiverged(_) => 4,
            _ => 2,
        }
    }
}
