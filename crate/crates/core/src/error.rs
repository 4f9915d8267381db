use std::path::PathBuf;

/// Errors raised across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("set `{id}`: point {index} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        id: String,
        index: usize,
        expected: usize,
        found: usize,
    },

    #[error("set `{0}` has no points")]
    EmptySet(String),

    #[error("set `{id}`: point {index} has a non-finite coordinate")]
    NonFinite { id: String, index: usize },

    /// All pairwise distances vanished, so no bandwidth can be derived.
    #[error("degenerate scale: {0}")]
    DegenerateScale(String),

    #[error("embeddings built from different random feature bases ({left:016x} vs {right:016x})")]
    BasisMismatch { left: u64, right: u64 },

    #[error("size mismatch: {0}")]
    SizeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn size(msg: impl Into<String>) -> Self {
        Error::SizeMismatch(msg.into())
    }

    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::DegenerateScale(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
