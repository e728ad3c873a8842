use std::fmt::Display;

use sqseg_core::Error;

/// Process exit codes. Usage errors use the BSD `EX_USAGE` value so they
/// cannot be confused with a missing class.
pub mod exit {
    pub const IO: u8 = 1;
    pub const MISSING_CLASS: u8 = 2;
    pub const BAD_WEIGHTS: u8 = 3;
    pub const DIMENSIONS: u8 = 4;
    pub const USAGE: u8 = 64;
}

pub fn exit_code(err: &Error) -> u8 {
    match err {
        Error::ClassNotPresent(_) => exit::MISSING_CLASS,
        e if e.is_weights_error() => exit::BAD_WEIGHTS,
        Error::ShapeMismatch(_) => exit::DIMENSIONS,
        _ => exit::IO,
    }
}

/// A core error with a note on what was being done when it happened.
#[derive(Debug, thiserror::Error)]
#[error("{context}: {source}")]
pub struct Failure {
    pub context: String,
    #[source]
    pub source: Error,
}

impl Failure {
    pub fn code(&self) -> u8 {
        exit_code(&self.source)
    }
}

impl From<Error> for Failure {
    fn from(source: Error) -> Self {
        Failure {
            context: "error".into(),
            source,
        }
    }
}

pub trait Context<T> {
    fn context(self, what: impl Display) -> Result<T, Failure>;
}

impl<T, E: Into<Error>> Context<T> for Result<T, E> {
    fn context(self, what: impl Display) -> Result<T, Failure> {
        self.map_err(|e| Failure {
            context: what.to_string(),
            source: e.into(),
        })
    }
}
