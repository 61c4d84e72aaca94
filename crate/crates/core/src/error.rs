use std::path::PathBuf;

/// Errors shared by every module of the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: usize, msg: String },
    #[error("cannot read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
    pub(crate) fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
