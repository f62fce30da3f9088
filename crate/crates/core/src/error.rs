use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error in `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("degenerate distribution: {0}")]
    DegenerateDistribution(String),

    #[error("{path}: row {row}: {message}")]
    Row { path: PathBuf, row: usize, message: String },

    #[error("instance too large: {0}")]
    Size(String),

    #[error("resource limit: {0}")]
    Resource(String),

    #[error("training failed: {0}")]
    Training(String),

    #[error("model not fitted")]
    NotFitted,

    #[error("undefined test: {0}")]
    UndefinedTest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
