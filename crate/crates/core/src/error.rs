use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
///
/// Each variant maps onto a stable category string (see [`CueError::category`])
/// so command-line callers can report failures in a machine-parsable form.
#[derive(Debug, thiserror::Error)]
pub enum CueError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("integrity check failed: {0}")]
    Integrity(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CueError {
    pub fn category(&self) -> &'static str {
        match self {
            CueError::InvalidArgument(_) => "invalid-argument",
            CueError::Validation(_) => "validation",
            CueError::Format(_) => "format",
            CueError::Integrity(_) => "integrity",
            CueError::Unsupported(_) => "unsupported",
            CueError::Contract(_) => "contract",
            CueError::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CueError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CueError>;

macro_rules! invalid_arg {
    ($($arg:tt)*) => { $crate::error::CueError::InvalidArgument(format!($($arg)*)) };
}
pub(crate) use invalid_arg;
