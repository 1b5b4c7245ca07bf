use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),
    /// Non-finite input or a numerical routine that did not converge.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// The request exceeds what this implementation is willing to do densely.
    #[error("capability exceeded: {0}")]
    Capability(String),
    /// A named configuration entry is invalid.
    #[error("config error on `{key}`: {message}")]
    Config { key: String, message: String },
    /// A fit or estimate had too few usable samples.
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
