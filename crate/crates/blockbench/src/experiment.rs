//! Balanced block randomization and the within-block difference-in-means
//! estimator.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{Assignment, Blocking};

/// Identifies one randomization draw. Each block consumes an independent
/// substream keyed by (seed, context, replication, block index), so results
/// do not depend on iteration order or worker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RandomizationKey {
    pub seed: u64,
    pub replication: u64,
    /// Caller-chosen namespace (e.g. a sample-draw or design id).
    pub context: u64,
}

impl RandomizationKey {
    pub fn new(seed: u64) -> Self {
        RandomizationKey { seed, replication: 0, context: 0 }
    }

    pub fn with_replication(mut self, replication: u64) -> Self {
        self.replication = replication;
        self
    }

    pub fn with_context(mut self, context: u64) -> Self {
        self.context = context;
        self
    }
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent ChaCha stream from a list of key parts.
pub(crate) fn derived_rng(parts: &[u64]) -> ChaCha8Rng {
    let mut state = 0u64;
    for &p in parts {
        state = splitmix(state ^ p);
    }
    let mut seed = [0u8; 32];
    for (i, chunk) in seed.chunks_exact_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix(state.wrapping_add(i as u64 + 1)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Assigns treatments independently per block: with probability 1/2 the
/// treated count is floor(n_b/2), otherwise ceil(n_b/2); membership is
/// uniform over subsets of that size.
pub fn balanced_block_randomize(blocking: &Blocking, key: &RandomizationKey) -> Result<Assignment> {
    let n = blocking.num_units();
    if !blocking.is_partition_of(n) {
        return Err(Error::InvalidBlocking(
            "randomization needs an exact partition of the sample".into(),
        ));
    }
    let mut treated = vec![false; n];
    for (block_idx, block) in blocking.blocks().iter().enumerate() {
        let nb = block.len();
        if nb < 2 {
            return Err(Error::SizeOneBlock);
        }
        let mut rng = derived_rng(&[key.seed, key.context, key.replication, block_idx as u64]);
        // odd blocks place the excess unit in either arm with equal probability
        let mut treat_count = nb / 2;
        if nb % 2 == 1 && rng.gen_bool(0.5) {
            treat_count += 1;
        }
        let mut members = block.members().to_vec();
        members.shuffle(&mut rng);
        for &i in members.iter().take(treat_count) {
            treated[i] = true;
        }
    }
    Ok(Assignment::new(treated))
}

/// Within-block difference-in-means estimate, aggregated with weights n_b/n.
pub fn estimate(blocking: &Blocking, assignment: &Assignment, observed: &[f64]) -> Result<f64> {
    let n = blocking.num_units();
    if observed.len() != n {
        return Err(Error::InvalidSample(format!(
            "got {} outcomes for {} blocked units",
            observed.len(),
            n
        )));
    }
    let mut total = 0.0;
    for (block_idx, block) in blocking.blocks().iter().enumerate() {
        let mut treated_sum = 0.0;
        let mut treated_count = 0usize;
        let mut control_sum = 0.0;
        let mut control_count = 0usize;
        for &i in block.members() {
            if assignment.is_treated(i) {
                treated_sum += observed[i];
                treated_count += 1;
            } else {
                control_sum += observed[i];
                control_count += 1;
            }
        }
        if treated_count == 0 {
            return Err(Error::DegenerateArm { block: block_idx, arm: "treated" });
        }
        if control_count == 0 {
            return Err(Error::DegenerateArm { block: block_idx, arm: "control" });
        }
        let diff = treated_sum / treated_count as f64 - control_sum / control_count as f64;
        total += block.len() as f64 / n as f64 * diff;
    }
    Ok(total)
}

/// E[1/T_b | n_b] = 2 n_b / (n_b^2 - o_b) under balanced block randomization.
pub fn inverse_treated_mean(block_size: usize) -> f64 {
    let nb = block_size as f64;
    let ob = (block_size % 2) as f64;
    2.0 * nb / (nb * nb - ob)
}

/// SD[1/T_b | n_b] = 2 o_b / (n_b^2 - 1).
pub fn inverse_treated_sd(block_size: usize) -> f64 {
    let nb = block_size as f64;
    let ob = (block_size % 2) as f64;
    2.0 * ob / (nb * nb - 1.0)
}
