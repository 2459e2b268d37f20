use std::io;

/// Errors raised across the forecasting pipeline.
///
/// The variants map onto the command-line exit codes: data and format
/// problems exit with 2, configuration problems with 3, everything else
/// with 1.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Data(_) | Error::Format { .. } | Error::Io(_) => 2,
            Error::Config(_) => 3,
            Error::Internal(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
