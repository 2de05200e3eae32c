//! Exhaustive generation and counting of admissible blockings.
//!
//! Blockings are generated in restricted-growth-string order: each unit is
//! assigned the lowest feasible block label first, so the stream is
//! canonical and duplicate-free. Infeasible size constraints (e.g. a fixed
//! size that does not divide n) simply yield an empty stream.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::types::{Blocking, BlockingMethod, DesignSpec, Sample};

/// Default ceiling on the number of blockings an enumeration may produce.
pub const DEFAULT_CEILING: u128 = 100_000_000;

/// Block-size constraint on the admissible set.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SizeConstraint {
    /// All set partitions.
    Unconstrained,
    /// Every block has exactly S units.
    Exactly(usize),
    /// Every block has at least S units.
    AtLeast(usize),
}

impl SizeConstraint {
    pub fn from_design(design: &DesignSpec) -> Self {
        match design.method {
            BlockingMethod::Complete => SizeConstraint::Unconstrained,
            BlockingMethod::FixedSized => SizeConstraint::Exactly(design.size),
            BlockingMethod::Threshold => SizeConstraint::AtLeast(design.size),
        }
    }

    fn min_size(&self) -> usize {
        match *self {
            SizeConstraint::Unconstrained => 1,
            SizeConstraint::Exactly(s) | SizeConstraint::AtLeast(s) => s.max(1),
        }
    }

    fn is_exact(&self) -> bool {
        matches!(self, SizeConstraint::Exactly(_))
    }
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc
            .saturating_mul((n - i) as u128)
            .checked_div((i + 1) as u128)
            .unwrap_or(u128::MAX);
    }
    acc
}

/// Number of admissible blockings of an n-unit sample, computed without
/// materializing partitions. Saturates at `u128::MAX`.
pub fn count_blockings(n: usize, constraint: SizeConstraint) -> u128 {
    if n == 0 {
        return 1;
    }
    match constraint {
        SizeConstraint::Exactly(s) => {
            let s = s.max(1);
            if !n.is_multiple_of(s) {
                return 0;
            }
            // The lowest unassigned unit picks its s-1 partners, repeatedly.
            let mut acc: u128 = 1;
            let mut m = n;
            while m > 0 {
                acc = acc.saturating_mul(binomial(m - 1, s - 1));
                m -= s;
            }
            acc
        }
        SizeConstraint::Unconstrained | SizeConstraint::AtLeast(_) => {
            let s = constraint.min_size();
            // t(m) = sum_{k=s..m} C(m-1, k-1) t(m-k); t(0) = 1.
            let mut t = vec![0u128; n + 1];
            t[0] = 1;
            for m in 1..=n {
                let mut acc: u128 = 0;
                for k in s..=m {
                    let term = binomial(m - 1, k - 1).saturating_mul(t[m - k]);
                    acc = acc.saturating_add(term);
                }
                t[m] = acc;
            }
            t[n]
        }
    }
}

/// Streams every admissible blocking of `{0..n}` exactly once, in
/// restricted-growth-string order. Fails up front when the predicted count
/// exceeds `ceiling`.
pub fn enumerate_blockings(n: usize, constraint: SizeConstraint, ceiling: u128) -> Result<BlockingIter> {
    if n == 0 {
        return Err(Error::Infeasible("cannot enumerate blockings of an empty sample".into()));
    }
    let predicted = count_blockings(n, constraint);
    if predicted > ceiling {
        return Err(Error::ResourceCeiling { predicted, ceiling });
    }
    Ok(BlockingIter::new(n, constraint))
}

/// Depth-first generator over restricted growth strings with size-constraint
/// pruning. Single-consumer; independent iterators may run concurrently.
#[derive(Debug)]
pub struct BlockingIter {
    n: usize,
    constraint: SizeConstraint,
    labels: Vec<usize>,
    sizes: Vec<usize>,
    num_labels: usize,
    /// Sum over open blocks of how many more units they need.
    deficit: usize,
    pos: usize,
    exhausted: bool,
    started: bool,
}

impl BlockingIter {
    fn new(n: usize, constraint: SizeConstraint) -> Self {
        BlockingIter {
            n,
            constraint,
            labels: vec![0; n],
            sizes: vec![0; n],
            num_labels: 0,
            deficit: 0,
            pos: 0,
            exhausted: false,
            started: false,
        }
    }

    fn place(&mut self, lab: usize) {
        let s = self.constraint.min_size();
        let old = self.sizes[lab];
        if old == 0 {
            self.num_labels += 1;
            self.deficit += s - 1;
        } else if old < s {
            self.deficit -= 1;
        }
        self.sizes[lab] = old + 1;
        self.labels[self.pos] = lab;
        self.pos += 1;
    }

    fn unplace(&mut self) -> usize {
        self.pos -= 1;
        let lab = self.labels[self.pos];
        let s = self.constraint.min_size();
        let old = self.sizes[lab];
        self.sizes[lab] = old - 1;
        if old == 1 {
            self.num_labels -= 1;
            self.deficit -= s - 1;
        } else if old <= s {
            self.deficit += 1;
        }
        lab
    }

    fn feasible(&self, lab: usize) -> bool {
        let s = self.constraint.min_size();
        let size = self.sizes[lab];
        if self.constraint.is_exact() && size >= s {
            return false; // block already full
        }
        let new_deficit = if size == 0 {
            self.deficit + s - 1
        } else if size < s {
            self.deficit - 1
        } else {
            self.deficit
        };
        let remaining = self.n - self.pos - 1;
        new_deficit <= remaining
    }

    /// Places the lowest feasible label >= `start` at the current position.
    fn descend_from(&mut self, start: usize) -> bool {
        let top = self.num_labels; // a brand-new block gets label num_labels
        for lab in start..=top {
            if self.feasible(lab) {
                self.place(lab);
                return true;
            }
        }
        false
    }

    fn advance(&mut self) -> bool {
        if self.exhausted {
            return false;
        }
        let mut backtracking = self.started && self.pos == self.n;
        loop {
            if backtracking {
                if self.pos == 0 {
                    self.exhausted = true;
                    return false;
                }
                let lab = self.unplace();
                if self.descend_from(lab + 1) {
                    backtracking = false;
                }
            } else {
                if self.pos == self.n {
                    self.started = true;
                    return true;
                }
                if !self.descend_from(0) {
                    backtracking = true;
                }
            }
        }
    }
}

impl Iterator for BlockingIter {
    type Item = Blocking;

    fn next(&mut self) -> Option<Blocking> {
        if self.advance() {
            Some(Blocking::from_labels(&self.labels))
        } else {
            None
        }
    }
}

/// A covariate-pattern equivalence class of blockings: a representative
/// blocking plus how many unit-level blockings share its pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct PatternClass {
    pub representative: Blocking,
    pub multiplicity: u64,
}

/// Order-preserving integer key for an f64 (total order, matching total_cmp).
fn float_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if bits >> 63 == 1 {
        !bits
    } else {
        bits ^ (1 << 63)
    }
}

/// Groups unit-level blockings into covariate-pattern equivalence classes.
/// Requires discrete covariates: errors when every covariate row is unique,
/// since the classes would then degenerate to the unit blockings.
pub fn covariate_pattern_classes(sample: &Sample, constraint: SizeConstraint) -> Result<Vec<PatternClass>> {
    let n = sample.n();
    let rows: Vec<Vec<u64>> = (0..n)
        .map(|i| sample.covariates(i).iter().map(|&v| float_key(v)).collect())
        .collect();
    if n > 1 {
        let mut distinct = rows.clone();
        distinct.sort();
        distinct.dedup();
        if distinct.len() == n {
            return Err(Error::ContinuousCovariates);
        }
    }

    let mut classes: BTreeMap<Vec<Vec<Vec<u64>>>, (Blocking, u64)> = BTreeMap::new();
    for blocking in enumerate_blockings(n, constraint, DEFAULT_CEILING)? {
        let mut pattern: Vec<Vec<Vec<u64>>> = blocking
            .blocks()
            .iter()
            .map(|b| {
                let mut block_rows: Vec<Vec<u64>> = b.members().iter().map(|&i| rows[i].clone()).collect();
                block_rows.sort();
                block_rows
            })
            .collect();
        pattern.sort();
        classes
            .entry(pattern)
            .and_modify(|e| e.1 += 1)
            .or_insert((blocking, 1));
    }
    Ok(classes
        .into_values()
        .map(|(representative, multiplicity)| PatternClass { representative, multiplicity })
        .collect())
}
