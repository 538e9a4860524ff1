use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A documented precondition of an operation was violated by the caller.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("requested lattice of {requested} vertices exceeds the cap of {cap}")]
    TooLarge { requested: u128, cap: usize },

    /// An iterative routine failed to reach its target (bracketing, root finding, ...).
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sign-changing iterate lost a sign after {restarts} restarts")]
    SignLoss { restarts: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn contract(msg: impl Into<String>) -> Error {
    Error::Contract(msg.into())
}
