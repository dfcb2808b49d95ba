use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// The caller supplied something that violates a precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A numerical routine failed to converge; `dump` carries the solver state.
    #[error("internal error: {message}")]
    Internal { message: String, dump: String },

    /// A configured budget (atoms, iterations, support size) was exceeded.
    #[error("resource error: {0}")]
    Resource(String),
}

impl Error {
    pub fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub fn internal(message: impl Into<String>, dump: impl Into<String>) -> Self {
        Error::Internal {
            message: message.into(),
            dump: dump.into(),
        }
    }

    pub fn is_input(&self) -> bool {
        matches!(self, Error::Input(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
