use crate::prelude::*;
use thiserror::Error;

/// Errors produced by the codec core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sample rate mismatch: expected {expected} Hz, found {found} Hz")]
    SampleRateMismatch { expected: u32, found: u32 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("mel filter {index} covers no FFT bin; lower n_mels or raise n_fft")]
    EmptyMelFilter { index: usize },

    #[error(
        "window/hop pair violates COLA: overlap-add normalizer {value:e} at output sample {sample}"
    )]
    ColaViolation { sample: usize, value: f64 },

    #[error("need {k} distinct patches to fit {k} codes, found {found}")]
    TooFewPatches { k: usize, found: usize },

    #[error("token index {index} out of range for codebook of size {size}")]
    TokenOutOfRange { index: u32, size: usize },

    #[error("{what} fingerprint mismatch: expected {expected:016x}, found {found:016x}")]
    FingerprintMismatch {
        what: &'static str,
        expected: u64,
        found: u64,
    },

    #[error("ridge system is singular at lambda = {lambda}; raise ridge_lambda")]
    SingularMelInverse { lambda: f64 },

    #[error("Lipschitz budget unavailable: {0}")]
    BudgetUnavailable(String),

    #[error("trial {trial} failed: {source}")]
    TrialFailed {
        trial: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = core::result::Result<T, Error>;
