use std::io;

/// Errors raised anywhere in the toolkit.
///
/// The variants line up with the CLI exit-code table: usage errors exit with
/// 2, malformed input with 3, contract violations with 4 and numeric failures
/// with 5.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    pub fn format(msg: impl Into<String>) -> Self {
        Error::Format(msg.into())
    }

    pub fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn io(context: impl Into<String>, source: io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// Process exit code for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Usage(_) => 2,
            Error::Format(_) => 3,
            Error::Contract(_) => 4,
            Error::Numeric(_) => 5,
            // A missing input file is a usage problem; anything else that
            // fails while reading or writing is treated as a format problem.
            Error::Io { source, .. } if source.kind() == io::ErrorKind::NotFound => 2,
            Error::Io { .. } => 3,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(format!("json: {e}"))
    }
}
