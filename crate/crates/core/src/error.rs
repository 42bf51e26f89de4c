use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error(
        "unsupported dimension MN = {0}: supported classes are 2^d (d>=1), 3*2^d (d>=0) and 2^d*3^t (d>=1, t>=1)"
    )]
    UnsupportedDimension(usize),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("degenerate basis: {0}")]
    DegenerateBasis(String),

    #[error("statistically invalid: {0}")]
    StatisticalValidity(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
