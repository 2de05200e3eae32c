//! Canonical worked examples used by the CLI presets and the test suites.

use crate::types::{Block, Blocking, Sample, Unit};

/// Six units with a single binary covariate: three with x = 1, three with
/// x = 0 (units 1-3 and 4-6 respectively).
pub fn six_unit_binary_sample() -> Sample {
    Sample::from_values_1d(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]).expect("valid sample")
}

fn blocking(blocks: &[&[usize]]) -> Blocking {
    Blocking::new(blocks.iter().map(|b| Block::new(b.to_vec())).collect())
}

/// The eight covariate-pattern blockings of the six-unit binary sample under
/// a size-2 threshold constraint, in presentation order:
/// {{1,0}}x3; {{1,1},{1,0},{0,0}}; {{1,1,1},{0,0,0}}; {{1,1,0},{1,0,0}};
/// {{1,1,1,0},{0,0}}; {{1,1,0,0},{1,0}}; {{1,0,0,0},{1,1}}; one block of 6.
pub fn six_unit_pattern_blockings() -> Vec<Blocking> {
    vec![
        blocking(&[&[0, 3], &[1, 4], &[2, 5]]),
        blocking(&[&[0, 1], &[2, 3], &[4, 5]]),
        blocking(&[&[0, 1, 2], &[3, 4, 5]]),
        blocking(&[&[0, 1, 3], &[2, 4, 5]]),
        blocking(&[&[0, 1, 2, 3], &[4, 5]]),
        blocking(&[&[0, 1, 3, 4], &[2, 5]]),
        blocking(&[&[0, 3, 4, 5], &[1, 2]]),
        blocking(&[&[0, 1, 2, 3, 4, 5]]),
    ]
}

/// Human-readable covariate patterns for the eight blockings above.
pub fn six_unit_pattern_labels() -> Vec<&'static str> {
    vec![
        "{{1,0},{1,0},{1,0}}",
        "{{1,1},{1,0},{0,0}}",
        "{{1,1,1},{0,0,0}}",
        "{{1,1,0},{1,0,0}}",
        "{{1,1,1,0},{0,0}}",
        "{{1,1,0,0},{1,0}}",
        "{{1,0,0,0},{1,1}}",
        "{{1,1,1,0,0,0}}",
    ]
}

/// Six units with two covariates, a binary one and an integer-scaled one,
/// where minimizing raw Euclidean distance balances the wrong covariate.
pub fn two_covariate_sample() -> Sample {
    Sample::new(vec![
        Unit::new("1", vec![1.0, 36.0]),
        Unit::new("2", vec![1.0, 38.0]),
        Unit::new("3", vec![1.0, 40.0]),
        Unit::new("4", vec![0.0, 36.0]),
        Unit::new("5", vec![0.0, 38.0]),
        Unit::new("6", vec![0.0, 40.0]),
    ])
    .expect("valid sample")
}
