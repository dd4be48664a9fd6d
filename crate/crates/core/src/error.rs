use std::path::PathBuf;

/// Errors raised across the toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unknown environment `{0}`")]
    UnknownEnv(String),
    #[error("invalid action: {0}")]
    Action(String),
    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("malformed policy file{}: {msg}", path.as_ref().map(|p| format!(" {}", p.display())).unwrap_or_default())]
    Format { path: Option<PathBuf>, msg: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("expert training failed: {0}")]
    ExpertTraining(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("expert and random returns coincide (span {0}); normalization undefined")]
    DegenerateNormalization(f64),
    #[error("statistics error: {0}")]
    Stat(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("timed out: {0}")]
    Timeout(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(msg: impl Into<String>) -> Self {
        Error::Format {
            path: None,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
