use thiserror::Error;

#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    /// The input violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("x not in alcove")]
    NotInAlcove,
    #[error("x not in chamber: coordinates must be strictly decreasing")]
    NotInChamber,
    /// Family or rank combination for which nothing is implemented.
    #[error("unsupported root system: {0}")]
    Unsupported(String),
    /// The requested evaluation method does not cover this query.
    #[error("method unavailable: {0}")]
    MethodUnavailable(String),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("group enumeration exceeded the cap of {0} elements")]
    GroupTooLarge(usize),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
