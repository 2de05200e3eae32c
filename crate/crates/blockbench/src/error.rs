use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("covariate dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("invalid sample: {0}")]
    InvalidSample(String),

    #[error("invalid blocking: {0}")]
    InvalidBlocking(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("enumeration would visit {predicted} blockings, exceeding the ceiling of {ceiling}")]
    ResourceCeiling { predicted: u128, ceiling: u128 },

    #[error("block of size one: within-block estimates are undefined")]
    SizeOneBlock,

    #[error("block {block} has no {arm} units, so its estimate is undefined")]
    DegenerateArm { block: usize, arm: &'static str },

    #[error("all covariate rows are distinct; pattern classes would degenerate to unit blockings")]
    ContinuousCovariates,

    #[error("{context} requires an even sample size, got n = {n}")]
    OddSampleSize { context: &'static str, n: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),
}

pub type Result<T> = std::result::Result<T, Error>;
