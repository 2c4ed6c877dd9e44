use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed PFM: {reason}")]
    MalformedPfm { path: PathBuf, reason: String },

    #[error("{path}: color PFM (\"PF\") is not supported, expected grayscale \"Pf\"")]
    ColorPfm { path: PathBuf },

    #[error("{path}: image decode failed: {reason}")]
    Image { path: PathBuf, reason: String },

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("light field: {0}")]
    LightField(String),

    #[error("scene: {0}")]
    Scene(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("view ({u}, {v}) outside {cols}x{rows} view grid")]
    ViewIndex {
        u: usize,
        v: usize,
        cols: usize,
        rows: usize,
    },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite disparity at valid pixel (row {row}, col {col})")]
    NonFinite { row: usize, col: usize },

    #[error("row {row} out of range for map with {height} rows")]
    RowOutOfRange { row: usize, height: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("degenerate batch: no pixel selected any view")]
    DegenerateBatch,

    #[error(
        "training diverged at step {step}: {what} (parameter norm {param_norm:.3e}, patch origins {origins:?})"
    )]
    Divergence {
        step: usize,
        what: String,
        param_norm: f64,
        origins: Vec<(usize, usize)>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
