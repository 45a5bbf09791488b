use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("comparison value {value} does not fit in {width} bits")]
    ValueOutOfRange { value: u64, width: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AbeError {
    #[error("unsupported security level: {0} bits")]
    UnsupportedSecurityLevel(u32),
    #[error("attribute set is empty")]
    EmptyAttributeSet,
    #[error("invalid attribute {0:?}")]
    InvalidAttribute(String),
    #[error("numeric value {value} does not fit in {width} bits")]
    NumericOutOfRange { value: u64, width: u32 },
    #[error("invalid {threshold}-of-{arity} gate")]
    InvalidGate { threshold: usize, arity: usize },
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("payload of {0} bytes exceeds the 1 KiB limit")]
    PayloadTooLarge(usize),
    #[error("attributes do not satisfy the ciphertext policy")]
    PolicyNotSatisfied,
    #[error("ciphertext integrity check failed")]
    IntegrityFailure,
    #[error("malformed encoding: {0}")]
    Malformed(&'static str),
    #[error("hash-to-curve failed")]
    HashToCurve,
}
