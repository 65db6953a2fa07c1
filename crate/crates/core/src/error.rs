use std::io;
use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid data: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("training failed at epoch {epoch}, sentence {sentence}: {message}")]
    Training {
        epoch: usize,
        sentence: usize,
        message: String,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("model file checksum mismatch")]
    Checksum,

    #[error("unsupported model format version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    #[error("malformed model file: {0}")]
    Format(String),

    #[error("{0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } | Error::Json(_) => "parse",
            Error::Validation(_) | Error::Dimension(_) => "validation",
            Error::Training { .. } => "training",
            Error::Config(_) => "config",
            Error::Checksum | Error::UnsupportedVersion { .. } | Error::Format(_) => "model",
        }
    }
}
