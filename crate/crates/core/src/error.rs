use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid certificate: {0}")]
    InvalidCertificate(String),

    /// A hypothesis required by a diagnostic does not hold for the
    /// supplied parameters.
    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The planned iteration count is beyond what a single machine can run.
    #[error("desk scale exceeded: planned T = {steps:.3e} > 2^31")]
    DeskScaleExceeded { steps: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
