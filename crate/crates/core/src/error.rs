use thiserror::Error;

/// Errors produced by the factorization engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    Input(String),

    #[error("{0} has no nontrivial factor")]
    NoFactor(u64),

    #[error("contraction error: {0}")]
    Contraction(String),

    #[error("scalar mode mismatch: {0}")]
    Mode(String),

    #[error("invalid layout: {0}")]
    Layout(String),

    #[error("resource limit exceeded: {needed} elements requested, limit is {limit}")]
    Resource { needed: u128, limit: u128 },

    #[error("degenerate readout at bit {bit}: omega = {omega}")]
    Degeneracy { bit: usize, omega: i64 },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
