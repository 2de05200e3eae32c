//! blockbench: construction and evaluation of blocked experimental designs.
//!
//! The crate builds optimal fixed-sized and threshold blockings of a sample
//! (exhaustively for small samples, by dynamic programming for
//! one-dimensional covariates), randomizes treatments within blocks,
//! estimates effects with the within-block difference in means, evaluates
//! the analytic conditional and unconditional variances of that estimator,
//! decomposes the unconditional variance into its three sources, and runs
//! seeded Monte Carlo comparisons of the designs.

pub mod decomposition;
pub mod enumeration;
pub mod error;
pub mod experiment;
pub mod objectives;
pub mod optimizer;
pub mod presets;
pub mod simulator;
pub mod types;
pub mod variance;

pub use error::{Error, Result};
pub use objectives::{DistanceMetric, ObjectiveKind, ObjectiveSpec};
pub use types::{
    validate_blocking, Assignment, Block, Blocking, BlockingMethod, DesignSpec, OutcomeModel,
    PotentialOutcomes, Sample, TieBreak, Unit, ValidityReport,
};
