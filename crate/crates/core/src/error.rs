use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {actual:?}")]
    Dimension {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("infeasible scene spec after {attempts} attempts: {reason}")]
    Infeasible { attempts: usize, reason: String },
    #[error("{0} lanes survive decoding, at most 255 fit an 8-bit label mask")]
    TooManyLanes(usize),
    #[error("format error: {0}")]
    Format(#[from] FormatError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for malformed files and filesystem failures, as opposed to
    /// contract violations on well-formed data.
    pub fn is_io_or_format(&self) -> bool {
        matches!(self, Error::Format(_) | Error::Io { .. })
    }
}

/// Reasons a serialized mask, field file or lane document is rejected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0}, only 255 is accepted")]
    Maxval(u64),
    #[error("truncated data: expected {expected} bytes, found {found}")]
    Truncated { expected: u64, found: u64 },
    #[error("{0} trailing bytes after payload")]
    TrailingBytes(u64),
    #[error("empty image dimension {height}x{width}")]
    EmptyDimension { height: u64, width: u64 },
    #[error("lane json: {0}")]
    Json(String),
}
