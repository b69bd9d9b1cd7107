//! Error type shared by the library.

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong between a byte stream and a report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("decode failed after {consumed} input bytes: {detail}")]
    Decode { consumed: usize, detail: String },

    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("offset ({dx},{dy}) yields no pixel pairs on a {width}x{height} image")]
    EmptyPairs {
        dx: i32,
        dy: i32,
        width: u32,
        height: u32,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("class {0:?} has no training samples")]
    DegenerateClass(String),

    #[error("undefined value: {0}")]
    Undefined(String),

    #[error("failed to load backend from {path:?}: {detail}")]
    BackendLoad { path: String, detail: String },

    #[error("interchange model error: {0}")]
    Model(String),

    #[error("unsupported artifact version {found:?} (expected {expected:?})")]
    Version { found: String, expected: String },

    #[error("backend contract violated: {0}")]
    Contract(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
