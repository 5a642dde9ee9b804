use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("invalid sample pattern: {0}")]
    Pattern(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dense SVD failed to converge on a {rows}x{cols} block")]
    SvdNoConvergence { rows: usize, cols: usize },

    #[error("target matrix is identically zero")]
    ZeroTarget,

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("unsupported format in {}: {msg}", path.display())]
    Unsupported { path: PathBuf, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
