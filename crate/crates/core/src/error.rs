use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Shapes or architectures that do not fit together.
    #[error("configuration error: {0}")]
    Config(String),

    /// A caller-supplied value outside its documented domain.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Non-finite parameters, activations or losses.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("config parse error at `{key}`: {message}")]
    Parse { key: String, message: String },

    #[error("checkpoint integrity failure in {path}: {message}")]
    Integrity { path: PathBuf, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image decode error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
