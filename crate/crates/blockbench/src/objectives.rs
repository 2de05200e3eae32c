//! Surrogate objective functions over blockings. Lower is better.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Blocking, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DistanceMetric {
    Euclidean,
    SquaredEuclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObjectiveKind {
    /// Average within-block distance weighted by block size:
    /// sum_b (n_b/n) * [sum over ordered pairs, self-pairs included] / n_b^2.
    WeightedAverageDistance,
    /// Plain sum of within-block pair distances (unordered pairs).
    SumOfDistances,
    /// Largest within-block pair distance over the whole blocking.
    MaxWithinBlockDistance,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub metric: DistanceMetric,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec { kind: ObjectiveKind::WeightedAverageDistance, metric: DistanceMetric::Euclidean }
    }
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, metric: DistanceMetric) -> Self {
        ObjectiveSpec { kind, metric }
    }
}

/// Distance between two covariate vectors.
pub fn pairwise_distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { left: a.len(), right: b.len() });
    }
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(match metric {
        DistanceMetric::Euclidean => sq.sqrt(),
        DistanceMetric::SquaredEuclidean => sq,
    })
}

/// Evaluates a surrogate objective on one blocking. Blocks are visited in
/// canonical order and pairs in index order, so equal blockings always
/// produce bit-identical values.
pub fn evaluate(blocking: &Blocking, sample: &Sample, spec: ObjectiveSpec) -> Result<f64> {
    let n = sample.n();
    for b in blocking.blocks() {
        if let Some(&bad) = b.members().iter().find(|&&i| i >= n) {
            return Err(Error::InvalidBlocking(format!("unit index {bad} out of range for n = {n}")));
        }
    }
    let mut total = 0.0f64;
    let mut max_dist = 0.0f64;
    for b in blocking.blocks() {
        let members = b.members();
        let nb = members.len();
        let mut pair_sum = 0.0f64;
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                let d = pairwise_distance(sample.covariates(i), sample.covariates(j), spec.metric)?;
                pair_sum += d;
                if d > max_dist {
                    max_dist = d;
                }
            }
        }
        match spec.kind {
            ObjectiveKind::WeightedAverageDistance => {
                // ordered pairs (2 * pair_sum) over n_b^2, weighted by n_b/n
                total += (nb as f64 / n as f64) * (2.0 * pair_sum) / (nb as f64 * nb as f64);
            }
            ObjectiveKind::SumOfDistances => total += pair_sum,
            ObjectiveKind::MaxWithinBlockDistance => {}
        }
    }
    Ok(match spec.kind {
        ObjectiveKind::MaxWithinBlockDistance => max_dist,
        _ => total,
    })
}
