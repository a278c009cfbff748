use thiserror::Error;

/// Rejected input to one of the pure model operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum InputError {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("{what} out of range: {value}")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },
}

impl InputError {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        InputError::Invalid { what, reason: reason.into() }
    }

    pub(crate) fn check_len(what: &'static str, expected: usize, got: usize) -> Result<(), Self> {
        if expected == got {
            Ok(())
        } else {
            Err(InputError::Dimension { what, expected, got })
        }
    }
}

/// Crate-level error used by the CLI and FFI layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Input(#[from] InputError),
    #[error(transparent)]
    Bake(#[from] crate::baker::BakeError),
    #[error(transparent)]
    Codec(#[from] crate::codec::CodecError),
    #[error(transparent)]
    Stream(#[from] crate::stream::StreamError),
    #[error(transparent)]
    Config(#[from] crate::config::ConfigError),
    #[error("image: {0}")]
    Image(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
