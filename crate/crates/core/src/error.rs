use std::path::PathBuf;

/// Errors produced anywhere in the monitor pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("payload too large: {len} samples exceeds the limit of {max}")]
    PayloadTooLarge { len: usize, max: usize },

    #[error("delivery failed after {retries} retries: {reason}")]
    DeliveryFailed { retries: u32, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("config error: {0}")]
    Config(String),

    /// An error raised inside one pipeline stage, tagged with the module name.
    #[error("{module}: {source}")]
    Stage {
        module: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_module(self, module: &'static str) -> Self {
        Error::Stage {
            module,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
