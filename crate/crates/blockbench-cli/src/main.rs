//! blockbench: construct blockings, randomize within blocks, evaluate the
//! analytic variances, and run design simulations from the command line.
//!
//! Exit codes: 0 success, 1 I/O or parse error, 2 domain infeasibility,
//! 3 resource guard.

mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use blockbench::decomposition::{decompose, CovariateSpec};
use blockbench::enumeration::{count_blockings, enumerate_blockings, SizeConstraint, DEFAULT_CEILING};
use blockbench::experiment::{balanced_block_randomize, RandomizationKey};
use blockbench::objectives::{evaluate, DistanceMetric, ObjectiveKind, ObjectiveSpec};
use blockbench::optimizer::{optimal_blocking_1d, optimal_blocking_exhaustive, OptimalBlocking};
use blockbench::presets;
use blockbench::simulator::{run_simulation, OutcomeModelId, SimulationConfig};
use blockbench::types::{Blocking, BlockingMethod, DesignSpec, OutcomeModel};
use blockbench::variance::{
    conditional_variance_binary, conditional_variance_general, enumerate_unconditional,
    unconditional_variance_closed_form, BinaryOutcomeParams, ClassicDesign,
};
use blockbench::Error;

use crate::io::{blocks_one_based, AssignmentBlockDoc, AssignmentDoc, BlockingDoc, ObjectiveDoc, SCHEMA};

/// Error carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn io(message: String) -> Self {
        CliError { code: 1, message }
    }

    fn domain(message: String) -> Self {
        CliError { code: 2, message }
    }

    fn resource(message: String) -> Self {
        CliError { code: 3, message }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::ResourceCeiling { .. } => CliError::resource(e.to_string()),
            other => CliError::domain(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "blockbench", version, about = "Blocking designs for randomized experiments: construction, assignment, variance analysis, simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Construct a blocking from a unit CSV (header: id,x1[,x2,...]).
    Block(BlockArgs),
    /// Randomize treatments within a saved blocking.
    Assign(AssignArgs),
    /// Analytic variance reports for the worked examples and closed forms.
    Variance(VarianceArgs),
    /// Monte Carlo comparison of complete, fixed-sized and threshold designs.
    Simulate(SimulateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Complete,
    Fixed,
    Threshold,
}

impl From<MethodArg> for BlockingMethod {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Complete => BlockingMethod::Complete,
            MethodArg::Fixed => BlockingMethod::FixedSized,
            MethodArg::Threshold => BlockingMethod::Threshold,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ObjectiveArg {
    WeightedAverage,
    Sum,
    Max,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Euclidean,
    SquaredEuclidean,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Auto,
    Exhaustive,
    Dp,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Table,
    Json,
}

fn objective_spec(objective: ObjectiveArg, metric: MetricArg) -> ObjectiveSpec {
    let kind = match objective {
        ObjectiveArg::WeightedAverage => ObjectiveKind::WeightedAverageDistance,
        ObjectiveArg::Sum => ObjectiveKind::SumOfDistances,
        ObjectiveArg::Max => ObjectiveKind::MaxWithinBlockDistance,
    };
    let metric = match metric {
        MetricArg::Euclidean => DistanceMetric::Euclidean,
        MetricArg::SquaredEuclidean => DistanceMetric::SquaredEuclidean,
    };
    ObjectiveSpec::new(kind, metric)
}

fn objective_name(kind: ObjectiveKind) -> &'static str {
    match kind {
        ObjectiveKind::WeightedAverageDistance => "weighted-average-distance",
        ObjectiveKind::SumOfDistances => "sum-of-distances",
        ObjectiveKind::MaxWithinBlockDistance => "max-within-block-distance",
    }
}

fn metric_name(metric: DistanceMetric) -> &'static str {
    match metric {
        DistanceMetric::Euclidean => "euclidean",
        DistanceMetric::SquaredEuclidean => "squared-euclidean",
    }
}

#[derive(Args)]
struct BlockArgs {
    /// Unit CSV file.
    #[arg(long, short)]
    input: PathBuf,
    #[arg(long, value_enum)]
    method: MethodArg,
    /// Size requirement S (exact for fixed, minimum for threshold).
    #[arg(long, default_value_t = 2)]
    size: usize,
    #[arg(long, value_enum, default_value = "weighted-average")]
    objective: ObjectiveArg,
    #[arg(long, value_enum, default_value = "euclidean")]
    metric: MetricArg,
    #[arg(long, value_enum, default_value = "auto")]
    solver: SolverArg,
    /// Refuse exhaustive search beyond this candidate count.
    #[arg(long, default_value_t = 500_000)]
    max_blockings: u128,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

fn solve_block(args: &BlockArgs, design: &DesignSpec, n: usize, dim: usize, sample: &blockbench::Sample)
    -> Result<(OptimalBlocking, &'static str), CliError>
{
    let dp_eligible = dim == 1 && design.objective.kind != ObjectiveKind::MaxWithinBlockDistance;
    match args.solver {
        SolverArg::Exhaustive => {
            let predicted = count_blockings(n, SizeConstraint::from_design(design));
            if predicted > args.max_blockings {
                let mut msg = Error::ResourceCeiling { predicted, ceiling: args.max_blockings }.to_string();
                if dp_eligible {
                    msg.push_str("; rerun with --solver dp or raise --max-blockings");
                }
                return Err(CliError::resource(msg));
            }
            Ok((optimal_blocking_exhaustive(sample, design, args.max_blockings)?, "exhaustive"))
        }
        SolverArg::Dp => Ok((optimal_blocking_1d(sample, design)?, "dp")),
        SolverArg::Auto => {
            let predicted = count_blockings(n, SizeConstraint::from_design(design));
            if predicted <= args.max_blockings {
                Ok((optimal_blocking_exhaustive(sample, design, args.max_blockings)?, "exhaustive"))
            } else if dp_eligible {
                Ok((optimal_blocking_1d(sample, design)?, "dp"))
            } else {
                Err(CliError::resource(format!(
                    "enumeration would visit {predicted} blockings, exceeding the ceiling of {}; \
                     no dynamic-program route exists for this covariate dimension or objective",
                    args.max_blockings
                )))
            }
        }
    }
}

fn cmd_block(args: BlockArgs) -> Result<(), CliError> {
    let sample = io::read_sample(&args.input)?;
    let spec = objective_spec(args.objective, args.metric);
    let method: BlockingMethod = args.method.into();
    let design = DesignSpec::new(method, args.size).with_objective(spec);

    let (result, solver) = match method {
        BlockingMethod::Complete => {
            let blocking = Blocking::single_block(sample.n());
            let value = evaluate(&blocking, &sample, spec)?;
            (OptimalBlocking { blocking, value }, "single-block")
        }
        _ => solve_block(&args, &design, sample.n(), sample.dim(), &sample)?,
    };

    let ids: Vec<String> = sample.units().iter().map(|u| u.id.clone()).collect();
    match args.format {
        FormatArg::Json => {
            let doc = BlockingDoc {
                schema: SCHEMA.to_string(),
                kind: "blocking".to_string(),
                n: sample.n(),
                ids,
                method: method.to_string(),
                size: args.size,
                objective: ObjectiveDoc {
                    kind: objective_name(spec.kind).to_string(),
                    metric: metric_name(spec.metric).to_string(),
                    value: result.value,
                },
                solver: solver.to_string(),
                tie_break: "smallest-mean-block-size-then-lex".to_string(),
                blocks: blocks_one_based(&result.blocking),
            };
            println!("{}", serde_json::to_string_pretty(&doc).expect("serializable"));
        }
        FormatArg::Table => {
            println!("method: {method} (S={})   n: {}   solver: {solver}", args.size, sample.n());
            println!("tie-break: smallest mean block size, then canonical order");
            println!(
                "objective ({}, {}): {:.6}",
                objective_name(spec.kind),
                metric_name(spec.metric),
                result.value
            );
            println!("blocks (1-based unit indices):");
            for (k, block) in result.blocking.blocks().iter().enumerate() {
                let idx: Vec<String> = block.members().iter().map(|&i| (i + 1).to_string()).collect();
                let names: Vec<&str> = block.members().iter().map(|&i| ids[i].as_str()).collect();
                println!("  block {}: {{{}}}  ids: {}", k + 1, idx.join(","), names.join(","));
            }
        }
    }
    Ok(())
}

#[derive(Args)]
struct AssignArgs {
    /// Blocking JSON produced by `blockbench block --format json`.
    #[arg(long, short)]
    blocking: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Replication index: separate draws of the same blocking and seed.
    #[arg(long, default_value_t = 0)]
    replication: u64,
    #[arg(long, value_enum, default_value = "json")]
    format: FormatArg,
}

fn cmd_assign(args: AssignArgs) -> Result<(), CliError> {
    let doc = io::read_blocking_doc(&args.blocking)?;
    let blocking = doc.to_blocking()?;
    if blocking.num_units() != doc.n || !blocking.is_partition_of(doc.n) {
        return Err(CliError::domain("blocks do not partition the sample".to_string()));
    }
    let key = RandomizationKey::new(args.seed).with_replication(args.replication);
    let assignment = balanced_block_randomize(&blocking, &key)?;

    match args.format {
        FormatArg::Json => {
            let out = AssignmentDoc {
                schema: SCHEMA.to_string(),
                kind: "assignment".to_string(),
                n: doc.n,
                seed: args.seed,
                replication: args.replication,
                ids: doc.ids.clone(),
                treated: assignment.treated().iter().map(|&t| t as u8).collect(),
                blocks: blocking
                    .blocks()
                    .iter()
                    .map(|b| AssignmentBlockDoc {
                        members: b.members().iter().map(|&i| i + 1).collect(),
                        size: b.len(),
                        treated_count: assignment.treated_count(b),
                    })
                    .collect(),
            };
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
        }
        FormatArg::Table => {
            println!("seed: {}   replication: {}", args.seed, args.replication);
            println!("{:<8} {:<12} treated", "unit", "id");
            for (i, id) in doc.ids.iter().enumerate() {
                println!("{:<8} {:<12} {}", i + 1, id, assignment.treated()[i] as u8);
            }
            for (k, b) in blocking.blocks().iter().enumerate() {
                println!("block {}: size {} treated {}", k + 1, b.len(), assignment.treated_count(b));
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum PresetArg {
    /// Objective and conditional-variance columns for the six-unit binary sample.
    Table1,
    /// The two-covariate pairing counterexample.
    #[value(name = "appendixC")]
    AppendixC,
    /// Closed-form unconditional variances with the enumeration cross-check.
    ClosedForms,
    /// Three-term decomposition of each design's unconditional variance.
    Decomposition,
}

#[derive(Args)]
struct VarianceArgs {
    #[arg(long, value_enum)]
    preset: PresetArg,
    /// Constant conditional outcome variance sigma^2.
    #[arg(long, default_value_t = 1.0)]
    sigma2: f64,
    /// Covariate predictiveness (mu1 - mu0)^2. Defaults to 2, or 1 for the
    /// appendixC preset.
    #[arg(long)]
    delta2: Option<f64>,
    /// Sample size for the closed-forms and decomposition presets.
    #[arg(long, default_value_t = 6)]
    n: usize,
    /// Report raw variances instead of the normalized n * Var.
    #[arg(long)]
    raw: bool,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

fn cmd_variance(args: VarianceArgs) -> Result<(), CliError> {
    let delta2 = args.delta2.unwrap_or(match args.preset {
        PresetArg::AppendixC => 1.0,
        _ => 2.0,
    });
    if delta2 < 0.0 {
        return Err(CliError::domain(format!("delta2 cannot be negative, got {delta2}")));
    }
    let params = BinaryOutcomeParams::from_predictiveness(args.sigma2, delta2)?;
    match args.preset {
        PresetArg::Table1 => preset_table1(&args, &params),
        PresetArg::AppendixC => preset_appendix_c(&args, &params),
        PresetArg::ClosedForms => preset_closed_forms(&args, &params),
        PresetArg::Decomposition => preset_decomposition(&args, &params),
    }
}

fn preset_table1(args: &VarianceArgs, params: &BinaryOutcomeParams) -> Result<(), CliError> {
    let sample = presets::six_unit_binary_sample();
    let x = sample.column(0);
    let labels = presets::six_unit_pattern_labels();
    let mut rows = Vec::new();
    for (blocking, label) in presets::six_unit_pattern_blockings().iter().zip(labels) {
        let objective = evaluate(blocking, &sample, ObjectiveSpec::default())?;
        let variance = conditional_variance_binary(blocking, &x, params)?;
        rows.push((label, objective, variance));
    }
    match args.format {
        FormatArg::Json => {
            let json: Vec<serde_json::Value> = rows
                .iter()
                .map(|(label, obj, var)| {
                    serde_json::json!({"blocking": label, "distance": obj, "variance": var})
                })
                .collect();
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "schema": SCHEMA,
                    "kind": "six-unit-table",
                    "sigma2": params.sigma2,
                    "delta2": params.delta_mu_sq(),
                    "rows": json,
                }))
                .expect("serializable")
            );
        }
        FormatArg::Table => {
            println!(
                "six-unit binary sample (sigma2 = {}, delta2 = {})",
                params.sigma2,
                params.delta_mu_sq()
            );
            println!("{:<24} {:>9} {:>9}", "blocking", "distance", "variance");
            for (label, obj, var) in rows {
                println!("{label:<24} {obj:>9.3} {var:>9.3}");
            }
        }
    }
    Ok(())
}

fn preset_appendix_c(args: &VarianceArgs, params: &BinaryOutcomeParams) -> Result<(), CliError> {
    let sample = presets::two_covariate_sample();
    let spec = ObjectiveSpec::default();
    let mut rows: Vec<(String, f64)> = Vec::new();
    for blocking in enumerate_blockings(sample.n(), SizeConstraint::Exactly(2), DEFAULT_CEILING)? {
        let value = evaluate(&blocking, &sample, spec)?;
        rows.push((blocking.to_string(), value));
    }
    let best = rows
        .iter()
        .map(|(_, v)| *v)
        .fold(f64::INFINITY, f64::min);
    let design = DesignSpec::new(BlockingMethod::FixedSized, 2).with_objective(spec);
    let optimum = optimal_blocking_exhaustive(&sample, &design, DEFAULT_CEILING)?;

    // only the first covariate predicts the outcome
    let delta = params.delta_mu_sq().sqrt();
    let mu: Vec<f64> = sample.column(0).iter().map(|&v| v * delta).collect();
    let sigma2 = vec![params.sigma2; sample.n()];
    let paired = conditional_variance_general(&optimum.blocking, &mu, &sigma2)?;
    let complete = conditional_variance_general(&Blocking::single_block(sample.n()), &mu, &sigma2)?;

    match args.format {
        FormatArg::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "schema": SCHEMA,
                    "kind": "two-covariate-counterexample",
                    "sigma2": params.sigma2,
                    "delta2": params.delta_mu_sq(),
                    "pairings": rows.iter().map(|(b, v)| serde_json::json!({"blocking": b, "distance": v})).collect::<Vec<_>>(),
                    "optimum": optimum.blocking.to_string(),
                    "optimum_distance": optimum.value,
                    "paired_variance": paired,
                    "complete_variance": complete,
                    "variance_excess": paired - complete,
                }))
                .expect("serializable")
            );
        }
        FormatArg::Table => {
            println!("all {} pairings (weighted average euclidean distance):", rows.len());
            for (label, value) in &rows {
                let marker = if (value - best).abs() <= 1e-12 { "  <- optimum" } else { "" };
                println!("{label:<32} {value:>7.3}{marker}");
            }
            println!();
            println!(
                "surrogate optimum {} at {:.3}; only the first covariate predicts the outcome",
                optimum.blocking, optimum.value
            );
            println!(
                "conditional variance: paired {:.4} vs single block {:.4}  (excess {:.4} = 2*delta2/15)",
                paired,
                complete,
                paired - complete
            );
        }
    }
    Ok(())
}

fn scale(args: &VarianceArgs, normalized: f64) -> f64 {
    if args.raw {
        normalized / args.n as f64
    } else {
        normalized
    }
}

fn preset_closed_forms(args: &VarianceArgs, params: &BinaryOutcomeParams) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for design in ClassicDesign::ALL {
        let closed = unconditional_variance_closed_form(design, args.n, params)?;
        let oracle = enumerate_unconditional(design, args.n, params)?;
        rows.push((design.label(), scale(args, closed), scale(args, oracle), (closed - oracle).abs()));
    }
    match args.format {
        FormatArg::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "schema": SCHEMA,
                    "kind": "closed-form-variances",
                    "n": args.n,
                    "sigma2": params.sigma2,
                    "delta2": params.delta_mu_sq(),
                    "normalized": !args.raw,
                    "designs": rows.iter().map(|(d, c, o, diff)| serde_json::json!({
                        "design": d, "closed_form": c, "enumeration": o, "abs_diff": diff,
                    })).collect::<Vec<_>>(),
                }))
                .expect("serializable")
            );
        }
        FormatArg::Table => {
            let label = if args.raw { "Var" } else { "n*Var" };
            println!(
                "unconditional variances ({label}) for a fair-coin covariate: n = {}, sigma2 = {}, delta2 = {}",
                args.n,
                params.sigma2,
                params.delta_mu_sq()
            );
            println!("{:<20} {:>12} {:>12} {:>10}", "design", "closed-form", "enumeration", "|diff|");
            for (design, closed, oracle, diff) in rows {
                println!("{design:<20} {closed:>12.5} {oracle:>12.5} {diff:>10.2e}");
            }
        }
    }
    Ok(())
}

fn preset_decomposition(args: &VarianceArgs, params: &BinaryOutcomeParams) -> Result<(), CliError> {
    let (mu0, mu1, sd) = (params.mu0, params.mu1, params.sigma2.sqrt());
    let model = OutcomeModel::with_constant_effect(
        move |x: &[f64]| if x[0] == 1.0 { mu1 } else { mu0 },
        0.0,
        move |_| sd,
    );
    let cov = CovariateSpec::BinaryFairCoin { n: args.n };
    let mut rows = Vec::new();
    for design in ClassicDesign::ALL {
        let report = decompose(&design, &cov, &model)?;
        let oracle = enumerate_unconditional(design, args.n, params)?;
        rows.push((design.label(), report.w1, report.w2, report.w3, report.total(), oracle));
    }
    match args.format {
        FormatArg::Json => {
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({
                    "schema": SCHEMA,
                    "kind": "variance-decomposition",
                    "n": args.n,
                    "sigma2": params.sigma2,
                    "delta2": params.delta_mu_sq(),
                    "designs": rows.iter().map(|(d, w1, w2, w3, total, oracle)| serde_json::json!({
                        "design": d, "w1": w1, "w2": w2, "w3": w3,
                        "total": total, "enumeration": oracle, "identity_holds": (total - oracle).abs() <= 1e-10,
                    })).collect::<Vec<_>>(),
                }))
                .expect("serializable")
            );
        }
        FormatArg::Table => {
            println!(
                "decomposition 4*W1 + 4*W2 + 2*W3 of n*Var: n = {}, sigma2 = {}, delta2 = {}",
                args.n,
                params.sigma2,
                params.delta_mu_sq()
            );
            println!(
                "{:<20} {:>9} {:>9} {:>9} {:>12} {:>12} {:>9}",
                "design", "W1", "W2", "W3", "4W1+4W2+2W3", "enumeration", "identity"
            );
            for (design, w1, w2, w3, total, oracle) in rows {
                let ok = if (total - oracle).abs() <= 1e-10 { "ok" } else { "FAIL" };
                println!("{design:<20} {w1:>9.5} {w2:>9.5} {w3:>9.5} {total:>12.5} {oracle:>12.5} {ok:>9}");
            }
        }
    }
    Ok(())
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Informative,
    Noise,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Sample size (even).
    #[arg(long, default_value_t = 12)]
    n: usize,
    /// Unique covariate draws.
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    /// Assignment replications per covariate draw.
    #[arg(long, default_value_t = 10)]
    reps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Size requirement for the blocked designs.
    #[arg(long, default_value_t = 2)]
    size: usize,
    /// Worker threads (0 = all cores); defaults to $BLOCKBENCH_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum, default_value = "table")]
    format: FormatArg,
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    if !args.n.is_multiple_of(2) {
        return Err(CliError::domain(format!(
            "simulation requires an even sample size, got {}",
            args.n
        )));
    }
    let model = match args.model {
        ModelArg::Informative => OutcomeModelId::Informative,
        ModelArg::Noise => OutcomeModelId::Noise,
    };
    let mut config = SimulationConfig::new(model, args.n);
    config.num_samples = args.samples;
    config.reps_per_sample = args.reps;
    config.seed = args.seed;
    config.size = args.size;
    config.threads = args.threads.unwrap_or_else(|| {
        std::env::var("BLOCKBENCH_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(0)
    });
    let result = run_simulation(&config)?;
    match args.format {
        FormatArg::Json => println!("{}", result.to_json()),
        FormatArg::Table => print!("{}", result.render_table()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Block(args) => cmd_block(args),
        Command::Assign(args) => cmd_assign(args),
        Command::Variance(args) => cmd_variance(args),
        Command::Simulate(args) => cmd_simulate(args),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
