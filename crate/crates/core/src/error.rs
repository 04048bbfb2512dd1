use thiserror::Error;

/// Failure categories of the binary and document codecs.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormatError {
    #[error("bad magic at offset 0: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },
    #[error("unsupported version {found} at offset 4 (expected 1)")]
    BadVersion { found: u32 },
    #[error("truncated {what}: expected {expected} bytes, got {actual}")]
    Truncated {
        what: &'static str,
        expected: u64,
        actual: u64,
    },
    #[error("invalid field `{field}` at offset {offset}: {reason}")]
    InvalidField {
        field: &'static str,
        offset: usize,
        reason: String,
    },
}

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the operation's domain.
    #[error("domain error: {0}")]
    Domain(String),
    /// Incompatible sizes, grid specs or channel counts.
    #[error("shape error: {0}")]
    Shape(String),
    #[error("pixel ({u}, {v}) is outside the field of view (incidence {incidence} rad)")]
    OutOfFov { u: f64, v: f64, incidence: f64 },
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error("document error: {0}")]
    Document(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for failures caused by bytes on disk rather than by the request.
    pub fn is_io_or_format(&self) -> bool {
        matches!(self, Error::Format(_) | Error::Document(_) | Error::Io(_))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Document(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
