use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum EnhanceError {
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("giving up after {attempts} attempts: {last}")]
    Exhausted { attempts: u32, last: Box<EnhanceError> },
    #[error("response does not follow the schema: {0}")]
    Schema(String),
    #[error("need {needed} valid teacher results, only {available} available (short by {})", needed - available)]
    Shortfall { needed: usize, available: usize },
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image encoding: {0}")]
    Image(#[from] image::ImageError),
}

impl EnhanceError {
    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> EnhanceError {
        let path = path.into();
        move |source| EnhanceError::Io { path, source }
    }

    /// Network failures, 429 and 5xx are worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            EnhanceError::Transport(_) => true,
            EnhanceError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}

pub type Result<T, E = EnhanceError> = std::result::Result<T, E>;
