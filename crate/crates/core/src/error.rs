//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid step law: {0}")]
    InvalidLaw(String),

    #[error("probability mass sums to {sum:?}, expected 1 (tolerance {tol:e})")]
    NotNormalized { sum: String, tol: f64 },

    #[error("negative probability at atom {point:?}")]
    NegativeProbability { point: Vec<i64> },

    #[error("step law has empty support")]
    EmptySupport,

    #[error("operation requires a drift-free law, but the mean is {mean:?}")]
    DriftedLaw { mean: Vec<f64> },

    #[error("unsupported family for this operation: {0}")]
    UnsupportedFamily(String),

    #[error("norming plan does not match the law: {0}")]
    PlanMismatch(String),

    #[error("memory estimate {needed_mb} MiB exceeds cap {cap_mb} MiB{hint}")]
    MemoryCap {
        needed_mb: u64,
        cap_mb: u64,
        hint: String,
    },

    #[error("work estimate {needed} exceeds cap {cap}{hint}")]
    CostCap {
        needed: u128,
        cap: u128,
        hint: String,
    },

    #[error("grid {dims:?} cannot meet alias bound {target:e} at n = {n}: achievable {achievable:e}")]
    GridTooSmall {
        dims: Vec<usize>,
        n: usize,
        target: f64,
        achievable: f64,
    },

    #[error("horizon too short: {0}")]
    HorizonTooShort(String),

    #[error("norming plan is recurrent (eta = {eta}) and the occupation tail does not vanish")]
    RecurrentPlan { eta: f64 },

    #[error("sequence is inconsistent with a renewal structure: p_{n} = {value:e}")]
    InconsistentSequence { n: usize, value: f64 },

    #[error("leading occupation value must be 1, got {0}")]
    BadLeadingTerm(f64),

    #[error("covariance matrix is singular or not positive definite")]
    NotPositiveDefinite,

    #[error("parameter out of range: {0}")]
    OutOfRange(String),

    #[error("evaluation did not reach the requested precision: {0}")]
    PrecisionFailure(String),

    #[error("model file: {0}")]
    ModelFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
