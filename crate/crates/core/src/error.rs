use thiserror::Error;

/// Errors raised by the engine.
///
/// Variants are grouped by how a caller is expected to react: input
/// problems (`Parse`, `Value`, `Shape`, `Index`, `Usage`) are the caller's
/// fault, the persistence variants describe a bad file on disk.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid value{}: {msg}", line.map(|l| format!(" on line {l}")).unwrap_or_default())]
    Value { line: Option<usize>, msg: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("session file version mismatch: found {found}, expected {expected}")]
    Migration { found: u32, expected: u32 },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("no remaining candidates: session complete")]
    SessionComplete,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { line, msg: msg.into() }
    }

    pub(crate) fn value(line: Option<usize>, msg: impl Into<String>) -> Self {
        Error::Value { line, msg: msg.into() }
    }

    pub(crate) fn usage(msg: impl Into<String>) -> Self {
        Error::Usage(msg.into())
    }

    /// True for errors caused by bad user input rather than internal failure.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, Error::Precondition(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
