use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// No real principal-branch solution exists for the argument.
    #[error("Lambert W argument {0} lies below the branch point -1/e")]
    LambertDomain(f64),

    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("preamble index {0} is already part of the active support")]
    IndexInSupport(usize),

    #[error("preamble index {index} is not part of the active support")]
    IndexNotInSupport { index: usize },

    #[error("preamble index {index} out of range for a pool of {pool_size}")]
    IndexOutOfRange { index: usize, pool_size: usize },

    #[error("exhaustive search limited to {max} columns, pool has {got}")]
    SizeGuard { max: usize, got: usize },

    #[error("scene carries no data symbols for Stage 2")]
    MissingDataSymbols,
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
