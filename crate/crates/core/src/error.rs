use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("tensor file has bad magic {0:?}")]
    BadMagic([u8; 4]),

    #[error("unsupported tensor file version {0}")]
    UnsupportedVersion(u16),

    #[error("tensor rank {0} outside [1, 4]")]
    BadRank(u16),

    #[error("tensor dimensions overflow")]
    DimOverflow,

    #[error("tensor header is truncated")]
    ShortHeader,

    #[error("tensor payload too short: expected {expected} bytes, found {found}")]
    ShortPayload { expected: usize, found: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(expected: impl ToString, found: impl ToString) -> Self {
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the filesystem or file contents rather than
    /// by argument validation.
    pub fn is_io(&self) -> bool {
        matches!(
            self,
            Error::Io { .. }
                | Error::Decode { .. }
                | Error::UnsupportedFormat(_)
                | Error::BadMagic(_)
                | Error::UnsupportedVersion(_)
                | Error::BadRank(_)
                | Error::DimOverflow
                | Error::ShortHeader
                | Error::ShortPayload { .. }
                | Error::Json(_)
        )
    }
}
