use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A value outside its documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A cyclic shift that does not belong to the payload kind.
    #[error("decode error: {0}")]
    Decode(String),

    /// Inconsistent configuration (duplicate shifts, bad fractions, ...).
    #[error("config error: {0}")]
    Config(String),

    /// Malformed file contents. `position` is a byte offset for binary
    /// files and a line number for CSV.
    #[error("format error at {position}: {message}")]
    Format { position: u64, message: String },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(position: u64, message: impl Into<String>) -> Self {
        Error::Format {
            position,
            message: message.into(),
        }
    }
}
