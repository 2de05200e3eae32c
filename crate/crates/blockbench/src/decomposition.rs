//! Three-term decomposition of the normalized unconditional variance,
//! 4*W1 + 4*W2 + 2*W3, for any blocking design under constant treatment
//! effects:
//!
//!   W1 = E[Var(y(0) | x)]                      irreducible outcome noise
//!   W2 = E[sum_b (n_b/n) s2_mu_b]              within-block spread of the CEF
//!   W3 = E[sum_b (n_b/n) SD(1/T_b | n_b) E(s2_y_b | x)]
//!                                              penalty from odd-sized blocks
//!
//! with SD(1/T_b | n_b) = 2 o_b/(n_b^2 - 1) and
//! E(s2_y_b | x) = sum_i sigma2_i/n_b + s2_mu_b.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::enumeration::DEFAULT_CEILING;
use crate::error::{Error, Result};
use crate::experiment::{derived_rng, inverse_treated_sd};
use crate::optimizer;
use crate::types::{Blocking, BlockingMethod, DesignSpec, OutcomeModel, Sample};
use crate::variance::{binary_design_blocking, ClassicDesign};

/// A design mapping: produces the blocking a design would build from a
/// sample's covariates.
pub trait BlockingDesign: Send + Sync {
    fn name(&self) -> String;
    fn blocking_for(&self, sample: &Sample) -> Result<Blocking>;
}

impl BlockingDesign for ClassicDesign {
    fn name(&self) -> String {
        self.label().to_string()
    }

    fn blocking_for(&self, sample: &Sample) -> Result<Blocking> {
        if sample.dim() != 1 {
            return Err(Error::Unsupported("the classic design mappings need a single binary covariate".into()));
        }
        binary_design_blocking(*self, &sample.column(0))
    }
}

/// A design that optimizes a surrogate objective over the admissible set.
#[derive(Debug, Clone)]
pub struct OptimizerDesign {
    pub spec: DesignSpec,
}

impl OptimizerDesign {
    pub fn new(spec: DesignSpec) -> Self {
        OptimizerDesign { spec }
    }
}

impl BlockingDesign for OptimizerDesign {
    fn name(&self) -> String {
        format!("{} (S={})", self.spec.method, self.spec.size)
    }

    fn blocking_for(&self, sample: &Sample) -> Result<Blocking> {
        if self.spec.method == BlockingMethod::Complete {
            return Ok(Blocking::single_block(sample.n()));
        }
        if sample.dim() == 1 {
            Ok(optimizer::optimal_blocking_1d(sample, &self.spec)?.blocking)
        } else {
            Ok(optimizer::optimal_blocking_exhaustive(sample, &self.spec, DEFAULT_CEILING)?.blocking)
        }
    }
}

type SamplerFn = Arc<dyn Fn(&mut ChaCha8Rng) -> Sample + Send + Sync>;

/// Covariate distribution over which the decomposition takes expectations.
#[derive(Clone)]
pub enum CovariateSpec {
    /// Explicit finite distribution: samples with probability weights
    /// summing to one. Expectations are exact.
    Finite(Vec<(Sample, f64)>),
    /// n independent fair-coin covariates. Every design mapping in scope
    /// depends on the draw only through the covariate sum, so the
    /// expectation is exact over sum classes with binomial weights.
    BinaryFairCoin { n: usize },
    /// Monte Carlo expectation over `draws` sampled covariate sets, with a
    /// reported standard error.
    Sampler { draws: usize, seed: u64, sampler: SamplerFn },
}

impl CovariateSpec {
    pub fn sampler<F>(draws: usize, seed: u64, f: F) -> Self
    where
        F: Fn(&mut ChaCha8Rng) -> Sample + Send + Sync + 'static,
    {
        CovariateSpec::Sampler { draws, seed, sampler: Arc::new(f) }
    }
}

/// Per-block entries behind W2 and W3 for one covariate draw.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagnostic {
    pub size: usize,
    pub s2_mu: f64,
    pub sd_inverse_treated: f64,
    pub expected_s2_y: f64,
}

/// Per-draw diagnostics: the draw's weight and its blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct DrawDiagnostics {
    pub label: String,
    pub weight: f64,
    pub blocks: Vec<BlockDiagnostic>,
}

/// Decomposition terms plus per-block diagnostics. `total()` restores the
/// normalized unconditional variance.
#[derive(Debug, Clone)]
pub struct DecompositionReport {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    /// Present for exact (finite) expectations; empty for Monte Carlo runs.
    pub draws: Vec<DrawDiagnostics>,
    /// Monte Carlo standard errors of (w1, w2, w3); None for exact runs.
    pub standard_errors: Option<[f64; 3]>,
}

impl DecompositionReport {
    pub fn total(&self) -> f64 {
        4.0 * self.w1 + 4.0 * self.w2 + 2.0 * self.w3
    }
}

struct DrawTerms {
    w1: f64,
    w2: f64,
    w3: f64,
    blocks: Vec<BlockDiagnostic>,
}

fn draw_terms(design: &dyn BlockingDesign, sample: &Sample, model: &OutcomeModel) -> Result<DrawTerms> {
    let n = sample.n();
    let mu: Vec<f64> = (0..n).map(|i| model.mu0(sample.covariates(i))).collect();
    let sigma2: Vec<f64> = (0..n).map(|i| model.sigma2(sample.covariates(i))).collect();
    let w1 = sigma2.iter().sum::<f64>() / n as f64;

    let blocking = design.blocking_for(sample)?;
    let mut w2 = 0.0;
    let mut w3 = 0.0;
    let mut blocks = Vec::with_capacity(blocking.num_blocks());
    for block in blocking.blocks() {
        let nb = block.len();
        if nb < 2 {
            return Err(Error::SizeOneBlock);
        }
        let members = block.members();
        let mu_mean: f64 = members.iter().map(|&i| mu[i]).sum::<f64>() / nb as f64;
        let s2_mu: f64 = members.iter().map(|&i| (mu[i] - mu_mean) * (mu[i] - mu_mean)).sum::<f64>()
            / (nb as f64 - 1.0);
        let noise_mean: f64 = members.iter().map(|&i| sigma2[i]).sum::<f64>() / nb as f64;
        let expected_s2_y = noise_mean + s2_mu;
        let sd_inv = inverse_treated_sd(nb);
        let weight = nb as f64 / n as f64;
        w2 += weight * s2_mu;
        w3 += weight * sd_inv * expected_s2_y;
        blocks.push(BlockDiagnostic { size: nb, s2_mu, sd_inverse_treated: sd_inv, expected_s2_y });
    }
    Ok(DrawTerms { w1, w2, w3, blocks })
}

fn binomial_weight(n: usize, k: usize) -> f64 {
    let mut acc = 1.0f64;
    let kk = k.min(n - k);
    for i in 0..kk {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc / (2.0f64).powi(n as i32)
}

/// Expected decomposition of the design's normalized unconditional variance
/// over the covariate distribution, under constant treatment effects.
pub fn decompose(design: &dyn BlockingDesign, covariates: &CovariateSpec, model: &OutcomeModel) -> Result<DecompositionReport> {
    match covariates {
        CovariateSpec::Finite(entries) => {
            let weight_sum: f64 = entries.iter().map(|(_, w)| w).sum();
            if (weight_sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidSample(format!("finite covariate weights must sum to 1, got {weight_sum}")));
            }
            let mut w = [0.0f64; 3];
            let mut draws = Vec::with_capacity(entries.len());
            for (idx, (sample, weight)) in entries.iter().enumerate() {
                let terms = draw_terms(design, sample, model)?;
                w[0] += weight * terms.w1;
                w[1] += weight * terms.w2;
                w[2] += weight * terms.w3;
                draws.push(DrawDiagnostics { label: format!("draw {}", idx + 1), weight: *weight, blocks: terms.blocks });
            }
            Ok(DecompositionReport { w1: w[0], w2: w[1], w3: w[2], draws, standard_errors: None })
        }
        CovariateSpec::BinaryFairCoin { n } => {
            let n = *n;
            if n == 0 {
                return Err(Error::InvalidSample("need at least one unit".into()));
            }
            let mut w = [0.0f64; 3];
            let mut draws = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let mut xs = vec![0.0; n];
                for x in xs.iter_mut().take(k) {
                    *x = 1.0;
                }
                let sample = Sample::from_values_1d(&xs)?;
                let weight = binomial_weight(n, k);
                let terms = draw_terms(design, &sample, model)?;
                w[0] += weight * terms.w1;
                w[1] += weight * terms.w2;
                w[2] += weight * terms.w3;
                draws.push(DrawDiagnostics { label: format!("sum_x={k}"), weight, blocks: terms.blocks });
            }
            Ok(DecompositionReport { w1: w[0], w2: w[1], w3: w[2], draws, standard_errors: None })
        }
        CovariateSpec::Sampler { draws, seed, sampler } => {
            if *draws == 0 {
                return Err(Error::InvalidSample("need at least one covariate draw".into()));
            }
            let terms: Result<Vec<[f64; 3]>> = (0..*draws)
                .into_par_iter()
                .map(|i| {
                    let mut rng = derived_rng(&[*seed, i as u64, 0x6465636f]);
                    let sample = sampler(&mut rng);
                    draw_terms(design, &sample, model).map(|t| [t.w1, t.w2, t.w3])
                })
                .collect();
            let terms = terms?;
            let m = terms.len() as f64;
            let mut mean = [0.0f64; 3];
            for t in &terms {
                for (a, b) in mean.iter_mut().zip(t) {
                    *a += b / m;
                }
            }
            let mut se = [0.0f64; 3];
            if terms.len() > 1 {
                for t in &terms {
                    for k in 0..3 {
                        let d = t[k] - mean[k];
                        se[k] += d * d;
                    }
                }
                for s in se.iter_mut() {
                    *s = (*s / (m - 1.0) / m).sqrt();
                }
            }
            Ok(DecompositionReport {
                w1: mean[0],
                w2: mean[1],
                w3: mean[2],
                draws: Vec::new(),
                standard_errors: Some(se),
            })
        }
    }
}

/// W2 under a linear conditional expectation function mu_x = alpha + x beta:
/// the quadratic form beta' E[sum_b (n_b/n) Q_b] beta, with Q_b the
/// within-block sample covariance matrix of the covariates. The intercept
/// does not enter (it cancels inside every block).
pub fn w2_linear(design: &dyn BlockingDesign, covariates: &CovariateSpec, beta: &[f64], _alpha: f64) -> Result<f64> {
    let dim = beta.len();
    let quad_for = |sample: &Sample| -> Result<f64> {
        if sample.dim() != dim {
            return Err(Error::DimensionMismatch { left: dim, right: sample.dim() });
        }
        let n = sample.n();
        let blocking = design.blocking_for(sample)?;
        let mut total = 0.0;
        for block in blocking.blocks() {
            let nb = block.len();
            if nb < 2 {
                return Err(Error::SizeOneBlock);
            }
            let members = block.members();
            let mut mean = vec![0.0f64; dim];
            for &i in members {
                for (m, &v) in mean.iter_mut().zip(sample.covariates(i)) {
                    *m += v / nb as f64;
                }
            }
            // beta' Q_b beta = sum_i (beta . (x_i - mean))^2 / (n_b - 1)
            let mut quad = 0.0;
            for &i in members {
                let proj: f64 = sample
                    .covariates(i)
                    .iter()
                    .zip(&mean)
                    .zip(beta)
                    .map(|((&x, &m), &b)| (x - m) * b)
                    .sum();
                quad += proj * proj;
            }
            total += nb as f64 / n as f64 * quad / (nb as f64 - 1.0);
        }
        Ok(total)
    };

    match covariates {
        CovariateSpec::Finite(entries) => {
            let mut acc = 0.0;
            for (sample, weight) in entries {
                acc += weight * quad_for(sample)?;
            }
            Ok(acc)
        }
        CovariateSpec::BinaryFairCoin { n } => {
            let mut acc = 0.0;
            for k in 0..=*n {
                let mut xs = vec![0.0; *n];
                for x in xs.iter_mut().take(k) {
                    *x = 1.0;
                }
                acc += binomial_weight(*n, k) * quad_for(&Sample::from_values_1d(&xs)?)?;
            }
            Ok(acc)
        }
        CovariateSpec::Sampler { draws, seed, sampler } => {
            let vals: Result<Vec<f64>> = (0..*draws)
                .into_par_iter()
                .map(|i| {
                    let mut rng = derived_rng(&[*seed, i as u64, 0x6465636f]);
                    quad_for(&sampler(&mut rng))
                })
                .collect();
            let vals = vals?;
            Ok(vals.iter().sum::<f64>() / vals.len() as f64)
        }
    }
}
