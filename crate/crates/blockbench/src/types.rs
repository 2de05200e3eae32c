//! Domain types shared by every other module: units, samples, blocks,
//! blockings, design specifications, assignments, and outcome models.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::ObjectiveSpec;

/// One experimental unit: an opaque id plus a real-valued covariate vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub id: String,
    pub covariates: Vec<f64>,
}

impl Unit {
    pub fn new(id: impl Into<String>, covariates: Vec<f64>) -> Self {
        Unit { id: id.into(), covariates }
    }
}

/// An ordered collection of units. Construction enforces the sample
/// invariants: at least one unit, unique ids, equal covariate dimension,
/// finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    units: Vec<Unit>,
}

impl Sample {
    pub fn new(units: Vec<Unit>) -> Result<Self> {
        if units.is_empty() {
            return Err(Error::InvalidSample("a sample needs at least one unit".into()));
        }
        let dim = units[0].covariates.len();
        let mut ids: Vec<&str> = Vec::with_capacity(units.len());
        for u in &units {
            if u.covariates.len() != dim {
                return Err(Error::DimensionMismatch { left: dim, right: u.covariates.len() });
            }
            if u.covariates.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidSample(format!(
                    "unit {} has a non-finite covariate",
                    u.id
                )));
            }
            ids.push(&u.id);
        }
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidSample("unit ids must be unique".into()));
        }
        Ok(Sample { units })
    }

    /// Builds a sample from one-dimensional covariates, ids "1".."n".
    pub fn from_values_1d(values: &[f64]) -> Result<Self> {
        let units = values
            .iter()
            .enumerate()
            .map(|(i, &v)| Unit::new((i + 1).to_string(), vec![v]))
            .collect();
        Sample::new(units)
    }

    pub fn n(&self) -> usize {
        self.units.len()
    }

    pub fn dim(&self) -> usize {
        self.units[0].covariates.len()
    }

    pub fn units(&self) -> &[Unit] {
        &self.units
    }

    pub fn covariates(&self, i: usize) -> &[f64] {
        &self.units[i].covariates
    }

    /// First covariate of every unit, in sample order.
    pub fn column(&self, j: usize) -> Vec<f64> {
        self.units.iter().map(|u| u.covariates[j]).collect()
    }
}

/// A non-empty set of unit indices. Members are kept sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Block {
    members: Vec<usize>,
}

impl Block {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        Block { members }
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Parity flag: 1 for odd-sized blocks, 0 for even.
    pub fn parity(&self) -> usize {
        self.members.len() % 2
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.members.binary_search(&idx).is_ok()
    }
}

/// A partition of unit indices into blocks. Blocks are stored in canonical
/// order (sorted by smallest member, members sorted) so blockings compare
/// by value; the derived `Ord` is the canonical lexicographic order used
/// for tie-breaking.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Blocking {
    blocks: Vec<Block>,
}

impl Blocking {
    pub fn new(mut blocks: Vec<Block>) -> Self {
        blocks.sort();
        Blocking { blocks }
    }

    /// Builds a blocking from per-unit block labels (restricted-growth
    /// string or any labelling).
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut by_label: Vec<Vec<usize>> = Vec::new();
        let mut seen: Vec<(usize, usize)> = Vec::new(); // (label, slot)
        for (idx, &lab) in labels.iter().enumerate() {
            match seen.iter().find(|(l, _)| *l == lab) {
                Some(&(_, slot)) => by_label[slot].push(idx),
                None => {
                    seen.push((lab, by_label.len()));
                    by_label.push(vec![idx]);
                }
            }
        }
        Blocking::new(by_label.into_iter().map(Block::new).collect())
    }

    pub fn single_block(n: usize) -> Self {
        Blocking::new(vec![Block::new((0..n).collect())])
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// Total number of units covered by the blocks.
    pub fn num_units(&self) -> usize {
        self.blocks.iter().map(Block::len).sum()
    }

    pub fn mean_block_size(&self) -> f64 {
        self.num_units() as f64 / self.blocks.len() as f64
    }

    /// True when the blocks exactly partition `0..n`.
    pub fn is_partition_of(&self, n: usize) -> bool {
        let mut all: Vec<usize> = self.blocks.iter().flat_map(|b| b.members().iter().copied()).collect();
        all.sort_unstable();
        all.len() == n && all.iter().copied().eq(0..n)
    }
}

impl fmt::Display for Blocking {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .blocks
            .iter()
            .map(|b| {
                let ids: Vec<String> = b.members().iter().map(|i| (i + 1).to_string()).collect();
                format!("{{{}}}", ids.join(","))
            })
            .collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

/// Which admissible set a design draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BlockingMethod {
    /// No blocking: a single block holding the whole sample.
    Complete,
    /// Every block contains exactly `size` units.
    FixedSized,
    /// Every block contains at least `size` units.
    Threshold,
}

impl fmt::Display for BlockingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BlockingMethod::Complete => "complete",
            BlockingMethod::FixedSized => "fixed-sized",
            BlockingMethod::Threshold => "threshold",
        };
        f.write_str(s)
    }
}

/// Tie-breaking policy among equal-objective optima.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieBreak {
    /// Prefer the smallest mean block size, then the canonical
    /// lexicographic order of the blocking.
    #[default]
    SmallestMeanSizeThenLex,
}

/// A blocking design: method, size requirement, surrogate objective and
/// tie-breaking policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignSpec {
    pub method: BlockingMethod,
    /// Size requirement S; ignored for `Complete`.
    pub size: usize,
    pub objective: ObjectiveSpec,
    pub tie_break: TieBreak,
}

impl DesignSpec {
    pub fn new(method: BlockingMethod, size: usize) -> Self {
        DesignSpec { method, size, objective: ObjectiveSpec::default(), tie_break: TieBreak::default() }
    }

    pub fn with_objective(mut self, objective: ObjectiveSpec) -> Self {
        self.objective = objective;
        self
    }
}

/// Per-unit binary treatment indicators.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    treated: Vec<bool>,
}

impl Assignment {
    pub fn new(treated: Vec<bool>) -> Self {
        Assignment { treated }
    }

    pub fn n(&self) -> usize {
        self.treated.len()
    }

    pub fn treated(&self) -> &[bool] {
        &self.treated
    }

    pub fn is_treated(&self, i: usize) -> bool {
        self.treated[i]
    }

    /// Number of treated units in a block (T_b).
    pub fn treated_count(&self, block: &Block) -> usize {
        block.members().iter().filter(|&&i| self.treated[i]).count()
    }

    /// The assignment with the two arms exchanged.
    pub fn swapped(&self) -> Assignment {
        Assignment { treated: self.treated.iter().map(|t| !t).collect() }
    }
}

/// Latent potential outcomes for every unit.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialOutcomes {
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
}

impl PotentialOutcomes {
    pub fn new(y0: Vec<f64>, y1: Vec<f64>) -> Result<Self> {
        if y0.len() != y1.len() {
            return Err(Error::InvalidSample("potential outcome vectors differ in length".into()));
        }
        Ok(PotentialOutcomes { y0, y1 })
    }

    pub fn n(&self) -> usize {
        self.y0.len()
    }

    /// Observed responses implied by an assignment.
    pub fn observe(&self, assignment: &Assignment) -> Vec<f64> {
        (0..self.n())
            .map(|i| if assignment.is_treated(i) { self.y1[i] } else { self.y0[i] })
            .collect()
    }
}

type CovariateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// Conditional mean/variance structure of the potential outcomes.
#[derive(Clone)]
pub struct OutcomeModel {
    mu0: CovariateFn,
    mu1: CovariateFn,
    sd: CovariateFn,
    constant_effect: Option<f64>,
}

impl OutcomeModel {
    pub fn new<F0, F1, S>(mu0: F0, mu1: F1, sd: S) -> Self
    where
        F0: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        F1: Fn(&[f64]) -> f64 + Send + Sync + 'static,
        S: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        OutcomeModel { mu0: Arc::new(mu0), mu1: Arc::new(mu1), sd: Arc::new(sd), constant_effect: None }
    }

    /// A model with y(1) = y(0) + delta, which pins mu1 = mu0 + delta.
    pub fn with_constant_effect<F0, S>(mu0: F0, delta: f64, sd: S) -> Self
    where
        F0: Fn(&[f64]) -> f64 + Send + Sync + Clone + 'static,
        S: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        let mu0_arc: CovariateFn = Arc::new(mu0);
        let mu0_for_mu1 = Arc::clone(&mu0_arc);
        OutcomeModel {
            mu0: mu0_arc,
            mu1: Arc::new(move |x: &[f64]| mu0_for_mu1(x) + delta),
            sd: Arc::new(sd),
            constant_effect: Some(delta),
        }
    }

    pub fn mu0(&self, x: &[f64]) -> f64 {
        (self.mu0)(x)
    }

    pub fn mu1(&self, x: &[f64]) -> f64 {
        (self.mu1)(x)
    }

    pub fn sd(&self, x: &[f64]) -> f64 {
        (self.sd)(x)
    }

    pub fn sigma2(&self, x: &[f64]) -> f64 {
        let s = (self.sd)(x);
        s * s
    }

    pub fn constant_effect(&self) -> Option<f64> {
        self.constant_effect
    }
}

impl fmt::Debug for OutcomeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("OutcomeModel")
            .field("constant_effect", &self.constant_effect)
            .finish_non_exhaustive()
    }
}

/// Outcome of checking one blocking against one sample (and optionally a
/// design's size constraint). Validation never fails; it reports.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityReport {
    pub all_non_empty: bool,
    pub pairwise_disjoint: bool,
    pub covers_sample: bool,
    pub duplicated_units: Vec<usize>,
    pub uncovered_units: Vec<usize>,
    pub out_of_range_units: Vec<usize>,
    /// Size-constraint check, present when a design was supplied.
    pub size_ok: Option<bool>,
    pub offending_blocks: Vec<usize>,
}

impl ValidityReport {
    pub fn is_valid(&self) -> bool {
        self.all_non_empty
            && self.pairwise_disjoint
            && self.covers_sample
            && self.size_ok.unwrap_or(true)
    }
}

/// Checks the three partition conditions plus, given a design, the size
/// constraint (|b| = S or |b| >= S).
pub fn validate_blocking(sample: &Sample, blocking: &Blocking, design: Option<&DesignSpec>) -> ValidityReport {
    let n = sample.n();
    let all_non_empty = blocking.blocks().iter().all(|b| !b.is_empty());

    let mut counts = vec![0usize; n];
    let mut out_of_range = Vec::new();
    for b in blocking.blocks() {
        for &i in b.members() {
            if i < n {
                counts[i] += 1;
            } else {
                out_of_range.push(i);
            }
        }
    }
    out_of_range.sort_unstable();
    out_of_range.dedup();
    let duplicated: Vec<usize> = (0..n).filter(|&i| counts[i] > 1).collect();
    let uncovered: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    let pairwise_disjoint = duplicated.is_empty();
    let covers_sample = uncovered.is_empty() && out_of_range.is_empty();

    let (size_ok, offending) = match design {
        None => (None, Vec::new()),
        Some(spec) => {
            let mut offending = Vec::new();
            for (k, b) in blocking.blocks().iter().enumerate() {
                let ok = match spec.method {
                    BlockingMethod::Complete => true,
                    BlockingMethod::FixedSized => b.len() == spec.size,
                    BlockingMethod::Threshold => b.len() >= spec.size,
                };
                if !ok {
                    offending.push(k);
                }
            }
            (Some(offending.is_empty()), offending)
        }
    };

    ValidityReport {
        all_non_empty,
        pairwise_disjoint,
        covers_sample,
        duplicated_units: duplicated,
        uncovered_units: uncovered,
        out_of_range_units: out_of_range,
        size_ok,
        offending_blocks: offending,
    }
}
