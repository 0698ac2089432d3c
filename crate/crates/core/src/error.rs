use thiserror::Error;

/// Errors raised by constructions, evaluations and the verification harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("dyadic valuation of zero is undefined")]
    ZeroValuation,

    #[error("negative dilation exponent {exponent}")]
    NegativeExponent { exponent: i128 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("desk cap `{cap}` exceeded: requested {requested}, limit {limit}")]
    CapExceeded {
        cap: &'static str,
        requested: u128,
        limit: u128,
    },

    #[error("search gave up at the desk caps: {0}")]
    SearchExhausted(String),

    #[error("integer overflow while computing `{0}`")]
    Overflow(&'static str),

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("builder invariant broken: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
