//! Monte Carlo engine: draws samples from one of two outcome models, builds
//! each design's blocking, randomizes repeatedly, and accumulates
//! mean-square errors of the estimator against the population, covariate-
//! conditional, and sample average treatment effects.
//!
//! Covariate draws are the parallel unit; every draw and every block owns a
//! derived RNG substream, so results are bit-identical regardless of worker
//! count.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{balanced_block_randomize, derived_rng, estimate, RandomizationKey};
use crate::objectives::ObjectiveSpec;
use crate::optimizer::optimal_blocking_1d;
use crate::types::{Blocking, BlockingMethod, DesignSpec, OutcomeModel, PotentialOutcomes, Sample};

/// The two outcome models used by the simulation study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OutcomeModelId {
    /// y(1) = 2 x^2 + e1, y(0) = 1.7 x^2 + e0, x ~ U(-5, 5), e ~ N(0, 1).
    Informative,
    /// y(1) = e1, y(0) = e0: the covariate carries no information.
    Noise,
}

impl std::fmt::Display for OutcomeModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            OutcomeModelId::Informative => "informative",
            OutcomeModelId::Noise => "noise",
        })
    }
}

impl OutcomeModelId {
    pub fn model(&self) -> OutcomeModel {
        match self {
            OutcomeModelId::Informative => OutcomeModel::new(
                |x: &[f64]| 1.7 * x[0] * x[0],
                |x: &[f64]| 2.0 * x[0] * x[0],
                |_| 1.0,
            ),
            OutcomeModelId::Noise => OutcomeModel::new(|_| 0.0, |_| 0.0, |_| 1.0),
        }
    }

    /// Conditional average effect at a covariate value.
    pub fn cef_effect(&self, x: f64) -> f64 {
        match self {
            OutcomeModelId::Informative => 0.3 * x * x,
            OutcomeModelId::Noise => 0.0,
        }
    }
}

/// Population average treatment effect of a model: the expectation of the
/// effect over x ~ U(-5, 5).
pub fn population_ate(model: OutcomeModelId) -> f64 {
    match model {
        // 0.3 E[x^2] = 0.3 * 25/3
        OutcomeModelId::Informative => 2.5,
        OutcomeModelId::Noise => 0.0,
    }
}

/// Draws covariates and potential outcomes for one sample.
pub fn draw_sample<R: Rng>(model: OutcomeModelId, n: usize, rng: &mut R) -> Result<(Sample, PotentialOutcomes)> {
    let xs: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let sample = Sample::from_values_1d(&xs)?;
    let m = model.model();
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    for &x in &xs {
        let e0: f64 = rng.sample(StandardNormal);
        let e1: f64 = rng.sample(StandardNormal);
        y0.push(m.mu0(&[x]) + e0);
        y1.push(m.mu1(&[x]) + e1);
    }
    Ok((sample, PotentialOutcomes::new(y0, y1)?))
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub n: usize,
    pub designs: Vec<BlockingMethod>,
    pub model: OutcomeModelId,
    pub objective: ObjectiveSpec,
    /// Size requirement for the blocked designs.
    pub size: usize,
    /// Unique covariate draws.
    pub num_samples: usize,
    /// Assignment replications per covariate draw.
    pub reps_per_sample: usize,
    pub seed: u64,
    /// Worker threads; 0 uses all cores. Never changes results.
    pub threads: usize,
}

impl SimulationConfig {
    pub fn new(model: OutcomeModelId, n: usize) -> Self {
        SimulationConfig {
            n,
            designs: vec![BlockingMethod::Complete, BlockingMethod::FixedSized, BlockingMethod::Threshold],
            model,
            objective: ObjectiveSpec::default(),
            size: 2,
            num_samples: 10_000,
            reps_per_sample: 10,
            seed: 0,
            threads: 0,
        }
    }
}

/// Mean-square error of the estimator against one target, with the Monte
/// Carlo standard error of the mean (clustered on covariate draws; absent
/// for single-draw runs).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MeasureStats {
    pub mse: f64,
    pub rmse: f64,
    pub se: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignStats {
    pub design: BlockingMethod,
    pub objective_mean: f64,
    pub objective_se: Option<f64>,
    pub pate: MeasureStats,
    pub cate: MeasureStats,
    pub sate: MeasureStats,
}

/// One design's performance relative to threshold blocking. The objective
/// column is the ratio of mean objective values; the variance columns are
/// ratios of root-mean-square errors.
#[derive(Debug, Clone, Serialize)]
pub struct RatioRow {
    pub design: BlockingMethod,
    pub objective: f64,
    pub pate: f64,
    pub cate: f64,
    pub sate: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationResult {
    pub schema: String,
    pub model: OutcomeModelId,
    pub n: usize,
    pub size: usize,
    pub num_samples: usize,
    pub reps_per_sample: usize,
    pub seed: u64,
    pub designs: Vec<DesignStats>,
    /// Present when threshold blocking is among the designs.
    pub relative_to_threshold: Option<Vec<RatioRow>>,
}

const TARGETS: usize = 3; // pate, cate, sate

/// Per covariate draw: objective value and mean squared deviation per
/// target, for each design.
struct DrawSummary {
    objective: Vec<f64>,
    mean_sq: Vec<[f64; TARGETS]>,
}

fn blocking_for(method: BlockingMethod, sample: &Sample, objective: ObjectiveSpec, size: usize) -> Result<Blocking> {
    match method {
        BlockingMethod::Complete => Ok(Blocking::single_block(sample.n())),
        BlockingMethod::FixedSized | BlockingMethod::Threshold => {
            let spec = DesignSpec::new(method, size).with_objective(objective);
            Ok(optimal_blocking_1d(sample, &spec)?.blocking)
        }
    }
}

fn simulate_draw(config: &SimulationConfig, draw: usize) -> Result<DrawSummary> {
    let mut sample_rng = derived_rng(&[config.seed, draw as u64, 0x73616d70]);
    let xs: Vec<f64> = (0..config.n).map(|_| sample_rng.gen_range(-5.0..5.0)).collect();
    let sample = Sample::from_values_1d(&xs)?;

    // Potential-outcome noise comes from its own substream so that runs of
    // the two models share covariate draws (and hence blockings) per seed.
    let mut noise_rng = derived_rng(&[config.seed, draw as u64, 0x6e6f6973]);
    let model = config.model.model();
    let n = config.n;
    let mut y0 = Vec::with_capacity(n);
    let mut y1 = Vec::with_capacity(n);
    for &x in &xs {
        let e0: f64 = noise_rng.sample(StandardNormal);
        let e1: f64 = noise_rng.sample(StandardNormal);
        y0.push(model.mu0(&[x]) + e0);
        y1.push(model.mu1(&[x]) + e1);
    }
    let outcomes = PotentialOutcomes::new(y0, y1)?;

    let pate = population_ate(config.model);
    let cate = xs.iter().map(|&x| config.model.cef_effect(x)).sum::<f64>() / n as f64;
    let sate = outcomes
        .y1
        .iter()
        .zip(&outcomes.y0)
        .map(|(a, b)| a - b)
        .sum::<f64>()
        / n as f64;

    let mut objective = Vec::with_capacity(config.designs.len());
    let mut mean_sq = Vec::with_capacity(config.designs.len());
    for (design_idx, &method) in config.designs.iter().enumerate() {
        let blocking = blocking_for(method, &sample, config.objective, config.size)?;
        objective.push(crate::objectives::evaluate(&blocking, &sample, config.objective)?);

        let mut sums = [0.0f64; TARGETS];
        for rep in 0..config.reps_per_sample {
            let key = RandomizationKey::new(config.seed)
                .with_context((draw as u64) << 3 | design_idx as u64)
                .with_replication(rep as u64);
            let assignment = balanced_block_randomize(&blocking, &key)?;
            let observed = outcomes.observe(&assignment);
            let est = estimate(&blocking, &assignment, &observed)?;
            for (acc, target) in sums.iter_mut().zip([pate, cate, sate]) {
                let dev = est - target;
                *acc += dev * dev;
            }
        }
        let reps = config.reps_per_sample as f64;
        mean_sq.push([sums[0] / reps, sums[1] / reps, sums[2] / reps]);
    }
    Ok(DrawSummary { objective, mean_sq })
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone, count: usize) -> (f64, Option<f64>) {
    let m = count as f64;
    let mean = values.clone().sum::<f64>() / m;
    if count < 2 {
        return (mean, None);
    }
    let ss: f64 = values.map(|v| (v - mean) * (v - mean)).sum();
    (mean, Some((ss / (m - 1.0) / m).sqrt()))
}

pub fn run_simulation(config: &SimulationConfig) -> Result<SimulationResult> {
    if config.num_samples == 0 || config.reps_per_sample == 0 {
        return Err(Error::Infeasible("need at least one sample draw and one replication".into()));
    }
    if config.designs.is_empty() {
        return Err(Error::Infeasible("no designs requested".into()));
    }
    if config.designs.contains(&BlockingMethod::FixedSized) && !config.n.is_multiple_of(config.size) {
        return Err(Error::Infeasible(format!(
            "fixed-sized blocking infeasible: {} is not a multiple of {}",
            config.n, config.size
        )));
    }

    let run = || -> Result<Vec<DrawSummary>> {
        (0..config.num_samples)
            .into_par_iter()
            .map(|draw| simulate_draw(config, draw))
            .collect()
    };
    let summaries = if config.threads == 0 {
        run()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.threads)
            .build()
            .map_err(|e| Error::Unsupported(format!("could not build thread pool: {e}")))?;
        pool.install(run)?
    };

    let draws = summaries.len();
    let mut designs = Vec::with_capacity(config.designs.len());
    for (design_idx, &method) in config.designs.iter().enumerate() {
        let (objective_mean, objective_se) =
            mean_and_se(summaries.iter().map(|s| s.objective[design_idx]), draws);
        let mut measures = Vec::with_capacity(TARGETS);
        for t in 0..TARGETS {
            let (mse, se) = mean_and_se(summaries.iter().map(|s| s.mean_sq[design_idx][t]), draws);
            measures.push(MeasureStats { mse, rmse: mse.sqrt(), se });
        }
        designs.push(DesignStats {
            design: method,
            objective_mean,
            objective_se,
            pate: measures[0],
            cate: measures[1],
            sate: measures[2],
        });
    }

    let relative_to_threshold = config
        .designs
        .iter()
        .position(|&m| m == BlockingMethod::Threshold)
        .map(|t_idx| {
            let t = designs[t_idx].clone();
            designs
                .iter()
                .filter(|d| d.design != BlockingMethod::Threshold)
                .map(|d| RatioRow {
                    design: d.design,
                    objective: d.objective_mean / t.objective_mean,
                    pate: d.pate.rmse / t.pate.rmse,
                    cate: d.cate.rmse / t.cate.rmse,
                    sate: d.sate.rmse / t.sate.rmse,
                })
                .collect::<Vec<_>>()
        });

    Ok(SimulationResult {
        schema: "blockbench/1".to_string(),
        model: config.model,
        n: config.n,
        size: config.size,
        num_samples: config.num_samples,
        reps_per_sample: config.reps_per_sample,
        seed: config.seed,
        designs,
        relative_to_threshold,
    })
}

impl SimulationResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("simulation result serializes")
    }

    /// Aligned text table: a relative-performance block (rows = methods,
    /// columns = objective, PATE, CATE, SATE) followed by raw values.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let fmt_se = |se: Option<f64>| match se {
            Some(v) => format!("{v:.2e}"),
            None => "n/a".to_string(),
        };
        out.push_str(&format!(
            "model: {}   n = {}   {} sample draws x {} replications   seed = {}\n\n",
            self.model, self.n, self.num_samples, self.reps_per_sample, self.seed
        ));
        if let Some(ratios) = &self.relative_to_threshold {
            out.push_str("relative performance (ratio to threshold blocking; variance columns on the RMSE scale)\n");
            out.push_str(&format!(
                "{:<16} {:>10} {:>10} {:>10} {:>10}\n",
                "method", "objective", "PATE", "CATE", "SATE"
            ));
            for r in ratios {
                out.push_str(&format!(
                    "{:<16} {:>10.3} {:>10.3} {:>10.3} {:>10.3}\n",
                    r.design.to_string(),
                    r.objective,
                    r.pate,
                    r.cate,
                    r.sate
                ));
            }
            out.push('\n');
        }
        out.push_str("raw values (mean objective; MSE per target with clustered standard errors)\n");
        out.push_str(&format!(
            "{:<16} {:>12} {:>10} {:>12} {:>10} {:>12} {:>10} {:>12} {:>10}\n",
            "method", "objective", "se", "PATE-MSE", "se", "CATE-MSE", "se", "SATE-MSE", "se"
        ));
        for d in &self.designs {
            out.push_str(&format!(
                "{:<16} {:>12.5} {:>10} {:>12.5} {:>10} {:>12.5} {:>10} {:>12.5} {:>10}\n",
                d.design.to_string(),
                d.objective_mean,
                fmt_se(d.objective_se),
                d.pate.mse,
                fmt_se(d.pate.se),
                d.cate.mse,
                fmt_se(d.cate.se),
                d.sate.mse,
                fmt_se(d.sate.se),
            ));
        }
        out
    }
}
