use std::path::PathBuf;

/// Errors produced by the interpolation engine and its supporting modules.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("point set is empty")]
    EmptyPointSet,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("non-finite value at point {index}")]
    NonFiniteValue { index: usize },

    #[error("color out of range [0, 1] at point {index}")]
    ColorOutOfRange { index: usize },

    #[error("invalid cell size {0}")]
    InvalidCellSize(f64),

    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),

    #[error("forward cache does not match inputs: {0}")]
    CacheMismatch(String),

    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: usize, height: usize },

    #[error("invalid subsampling factor {0}")]
    InvalidFactor(usize),

    #[error("invalid point count {0}")]
    InvalidCount(usize),

    #[error("trajectory log is empty")]
    EmptyLog,

    #[error("unsupported image format: {}", .0.display())]
    UnsupportedFormat(PathBuf),

    #[error("corrupt file {}: {reason}", path.display())]
    CorruptFile { path: PathBuf, reason: String },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::CorruptFile {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
