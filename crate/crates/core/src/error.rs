use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("truncated velodyne data: {len} bytes is not a multiple of 16")]
    TruncatedFile { len: usize },

    #[error("corrupt point data: non-finite value in point {index}")]
    CorruptData { index: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("missing calibration key `{0}`")]
    MissingCalibration(String),

    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),

    #[error("cannot remove ground from an empty scene")]
    EmptyScene,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("scene sets do not align; missing ids: {}", missing.join(", "))]
    Alignment { missing: Vec<String> },

    #[error("invalid sample database: {0}")]
    Database(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
