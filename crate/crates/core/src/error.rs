use thiserror::Error;

/// Errors produced by model construction, optimization, and simulation.
#[derive(Error, Debug)]
pub enum Error {
    /// Input failed a structural or numerical validation check.
    #[error("validation: {0}")]
    Validation(String),

    /// An exact-enumeration guard was exceeded; the request is well-formed
    /// but too large to enumerate.
    #[error("guard: {0}")]
    Guard(String),

    /// A numerical operation left its supported domain.
    #[error("numerics: {0}")]
    Numerics(String),

    /// Reading or parsing an input file failed.
    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn guard(msg: impl Into<String>) -> Self {
        Error::Guard(msg.into())
    }

    pub fn numerics(msg: impl Into<String>) -> Self {
        Error::Numerics(msg.into())
    }
}

/// Checks that `p` holds; otherwise returns a validation error built from `msg`.
pub fn ensure(p: bool, msg: impl Into<String>) -> Result<()> {
    if p {
        Ok(())
    } else {
        Err(Error::validation(msg))
    }
}
