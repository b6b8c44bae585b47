use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("empty patch: box {0:?} does not intersect the image")]
    EmptyPatch([f64; 4]),

    #[error("descriptor length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("unsupported image format (magic bytes {0:02x?})")]
    UnsupportedImage(Vec<u8>),

    #[error("image decode: {0}")]
    Image(String),

    #[error("missing image for {0}")]
    MissingImage(String),

    #[error("class vocabulary mismatch: {0}")]
    Vocabulary(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn write(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Write {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }

    /// True for errors caused by bad or missing input rather than failures
    /// while producing output.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Write { .. } | Error::Json(_))
    }
}
