//! Error type shared across the crate.

use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failures surfaced by this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value is outside its documented domain.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// Two arrays that must agree in shape do not.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// An index referred to a row/column/step that does not exist.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// An optimizer produced a non-finite weight or loss.
    #[error("optimizer diverged at step {step}: {message}")]
    Divergence { step: usize, message: String },

    /// An iterative numeric routine failed to converge.
    #[error("numeric routine failed: {0}")]
    Numeric(String),

    /// Integer arithmetic would overflow.
    #[error("arithmetic overflow: {0}")]
    Overflow(String),

    /// Training produced a non-finite loss.
    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    /// A required file or directory is missing.
    #[error("missing path: {}", path.display())]
    MissingPath { path: PathBuf },

    /// A manifest or model descriptor could not be parsed.
    #[error("malformed descriptor {}: {message}", path.display())]
    MalformedDescriptor { path: PathBuf, message: String },

    /// The descriptor declares a schema version this build does not read.
    #[error("unsupported schema version {found} in {} (supported: {supported})", path.display())]
    UnsupportedSchema {
        path: PathBuf,
        found: u32,
        supported: u32,
    },

    /// A binary payload does not have the byte count promised by its descriptor.
    #[error(
        "payload size mismatch for {}: expected {expected_bytes} bytes, found {actual_bytes} bytes",
        path.display()
    )]
    PayloadSizeMismatch {
        path: PathBuf,
        expected_bytes: u64,
        actual_bytes: u64,
    },

    /// Loss-channel augmentation was requested but the source has no losses.
    #[error("trajectory {source_id} has no recorded losses; cannot augment")]
    MissingLosses { source_id: String },

    /// An operation that needs at least one element received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Underlying I/O failure, annotated with the path involved.
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Attach a path to a raw I/O error.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
