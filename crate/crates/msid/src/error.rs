use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an operation's input was violated.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A record in a session file could not be parsed.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A parsed record violates a structural invariant.
    #[error("validation error at line {line} ({record}): {message}")]
    Validation {
        line: usize,
        record: String,
        message: String,
    },

    /// A binary artifact has a bad magic, version or layout.
    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
