use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AceError {
    #[error("operands belong to different fields (q = {left} vs q = {right})")]
    ParamsMismatch { left: u32, right: u32 },

    #[error("zero has no multiplicative inverse")]
    NonInvertible,

    #[error("dimension mismatch: {0}")]
    DimensionError(String),

    #[error("matrix is singular")]
    Singular,

    #[error("rejection sampling gave up after {0} attempts")]
    SamplingFailure(usize),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("message is not in the message space (zero vector)")]
    MessageOutOfSpace,

    #[error("malformed ciphertext: {0}")]
    MalformedCiphertext(String),

    #[error("enumeration of {size} elements exceeds the feasibility cap of {cap}")]
    FeasibilityError { size: u128, cap: u128 },

    #[error("not authorized: {0}")]
    NotAuthorized(String),

    #[error("distributions are over different supports: {0}")]
    DomainError(String),

    #[error("invalid attack strategy: {0}")]
    InvalidStrategy(String),

    #[error("format error: {0}")]
    FormatError(String),

    #[error("integrity check failed: {0}")]
    IntegrityError(String),
}

pub type Result<T, E = AceError> = std::result::Result<T, E>;
