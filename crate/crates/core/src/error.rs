use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes, dimensions or configuration values that cannot work together.
    #[error("configuration error ({key}): {msg}")]
    Config { key: String, msg: String },

    /// The caller violated an operation precondition.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub(crate) fn shape(op: &str, msg: impl Into<String>) -> Self {
        Error::config(format!("shape:{op}"), msg)
    }
}
