use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite entry at flat index {0}")]
    NonFinite(usize),

    #[error("singular value decomposition did not converge")]
    SvdNoConvergence,

    #[error("diverged at iteration {iteration}: {what}")]
    Divergence { iteration: usize, what: String },

    #[error("size guard exceeded: {0}")]
    TooLarge(String),

    #[error("malformed tensor container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
