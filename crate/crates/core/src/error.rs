use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CodeError {
    #[error("code length {0} is not a power of two")]
    LengthNotPowerOfTwo(usize),
    #[error("{k_info} information bits plus {crc_len} CRC bits exceed code length {n_bits}")]
    RateTooHigh {
        n_bits: usize,
        k_info: usize,
        crc_len: usize,
    },
    #[error("invalid CRC: {0}")]
    InvalidCrc(String),
    #[error("frozen-set file: {0}")]
    FrozenFile(String),
    #[error("expected {expected} bits, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("u-vector carries a one at frozen position {0}")]
    FrozenViolation(usize),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("expected {expected} LLRs, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("list size must be at least 1")]
    EmptyList,
    #[error("flip position {0} is frozen or out of range")]
    InvalidFlip(usize),
    #[error("non-finite channel LLR at index {0}")]
    NonFiniteLlr(usize),
}

#[derive(Debug, Error)]
pub enum FlipError {
    #[error("LSD shape parameter {0} outside (0, 1)")]
    InvalidShape(f64),
    #[error("flip set is empty")]
    EmptyFlipSet,
    #[error("duplicate flip position {0}")]
    DuplicatePosition(usize),
    #[error("flip position {0} is not a free position")]
    NotFree(usize),
    #[error("likelihoods malformed: {0}")]
    BadLikelihoods(String),
    #[error("decoder state has {got} paths, state encoding needs {expected}")]
    MissingPaths { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("scorer did not answer within {0:?}")]
    Timeout(std::time::Duration),
    #[error("malformed scorer response: {0}")]
    Malformed(String),
    #[error("scorer process exited: {0}")]
    ProcessExited(String),
    #[error("model: {0}")]
    Model(String),
    #[error("scorer I/O: {0}")]
    Io(#[from] io::Error),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Flip(#[from] FlipError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Scorer(#[from] ScorerError),
    #[error("frame {frame}: {source}")]
    Aborted {
        frame: u64,
        source: Box<crate::flip::TwoPhaseError>,
    },
    #[error("dataset: {0}")]
    Dataset(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}
