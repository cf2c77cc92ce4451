use thiserror::Error;

/// Failure modes shared by every module of the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("design failed to converge: g-value {gvalue} exceeds 2 x effective dimension {effective_dim}")]
    FailsToConverge { gvalue: f64, effective_dim: usize },

    #[error("vector has a component of norm {residual:e} orthogonal to the span of the Gram matrix")]
    OutOfSpan { residual: f64 },

    #[error("Gram matrix does not span the query directions")]
    SingularGram,

    #[error("filter removed more than {cap} of {n} points")]
    TooManyRemoved { cap: usize, n: usize },

    #[error("invalid truncation parameter nu = {0}; M2 requires 0 < nu < 1")]
    InvalidNu(f64),

    #[error("invalid config at `{field}`: {message}")]
    ConfigInvalid { field: String, message: String },

    #[error("checkpoint {checkpoint} is outside the covered range 1..={max}")]
    CheckpointOutOfRange { checkpoint: u64, max: u64 },

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::ConfigInvalid {
            field: field.into(),
            message: message.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
