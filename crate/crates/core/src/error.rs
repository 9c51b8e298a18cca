use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite values in {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("missing cached features for frame `{0}`")]
    MissingFeature(String),

    #[error("duplicate frame id `{0}`")]
    DuplicateFrame(String),

    #[error("cache manifest mismatch: {0}")]
    CacheMismatch(String),

    #[error("format version mismatch in {path}: expected {expected}, found {found}")]
    Version {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("checksum mismatch for {0}")]
    Checksum(PathBuf),

    #[error("missing frame file {0}")]
    MissingFrame(PathBuf),

    #[error("dataset integrity error: {0}")]
    Integrity(String),

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("cosine distance undefined: slot {0} has zero norm")]
    ZeroNormSlot(usize),

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("fingerprint mismatch: expected {expected}, found {found}")]
    Fingerprint { expected: String, found: String },

    #[error("non-finite loss at epoch {epoch}, batch {batch}; parameter norms: {norms}")]
    Diverged {
        epoch: usize,
        batch: usize,
        norms: String,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by bad inputs (files, configs, arguments) rather than
    /// by a failure while computing.
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Diverged { .. } | Error::NonFinite(_))
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
