use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("empty input: {0}")]
    Empty(String),
    #[error("image format: {0}")]
    Format(String),
    #[error("observer failed at iteration {iter}: {source}")]
    Observer { iter: u64, source: Box<Error> },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// True for failures caused by the numbers (divergence, non-finite values)
    /// rather than by bad input.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Numerical(_) => true,
            Error::Observer { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn dims(msg: impl Into<String>) -> Error {
    Error::Dimension(msg.into())
}
