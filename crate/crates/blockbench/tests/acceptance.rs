//! Acceptance suite. Each test checks one release criterion at its stated
//! tolerance and prints a single pass line; a panic marks the criterion
//! failed. Run with `cargo test -p blockbench --test acceptance`.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use blockbench::decomposition::{decompose, CovariateSpec};
use blockbench::enumeration::{enumerate_blockings, SizeConstraint, DEFAULT_CEILING};
use blockbench::experiment::{balanced_block_randomize, RandomizationKey};
use blockbench::objectives::{evaluate, ObjectiveSpec};
use blockbench::optimizer::{assert_dominance, optimal_blocking_1d, optimal_blocking_exhaustive};
use blockbench::presets;
use blockbench::simulator::{run_simulation, OutcomeModelId, SimulationConfig, SimulationResult};
use blockbench::types::{Block, Blocking, BlockingMethod, DesignSpec, OutcomeModel, Sample};
use blockbench::variance::{
    conditional_variance_binary, conditional_variance_general, enumerate_unconditional,
    unconditional_variance_closed_form, BinaryOutcomeParams, ClassicDesign,
};

fn pass(id: u32, name: &str) {
    println!("[acceptance] criterion {id:02} ({name}): PASS");
}

fn table_params() -> BinaryOutcomeParams {
    BinaryOutcomeParams::from_predictiveness(1.0, 2.0).unwrap()
}

const SIX_UNIT_X: [f64; 6] = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];

#[test]
fn criterion_01_six_unit_table_reproduction() {
    let start = Instant::now();
    let sample = presets::six_unit_binary_sample();
    let blockings = presets::six_unit_pattern_blockings();
    let expected_objective = [0.500, 0.167, 0.0, 0.444, 0.250, 0.500, 0.250, 0.500];
    let expected_variance = [1.333, 0.889, 0.750, 1.250, 0.889, 1.185, 0.889, 1.067];
    for ((blocking, obj), var) in blockings.iter().zip(expected_objective).zip(expected_variance) {
        let got_obj = evaluate(blocking, &sample, ObjectiveSpec::default()).unwrap();
        assert!(
            (got_obj - obj).abs() <= 5e-4,
            "objective for {blocking}: got {got_obj}, want {obj}"
        );
        let got_var = conditional_variance_binary(blocking, &SIX_UNIT_X, &table_params()).unwrap();
        assert!(
            (got_var - var).abs() <= 5e-4,
            "variance for {blocking}: got {got_var}, want {var}"
        );
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, limit 1 s");
    pass(1, "six-unit objective and variance columns");
}

/// Covariate pattern of a blocking over the six-unit binary sample.
fn pattern(blocking: &Blocking) -> Vec<Vec<u64>> {
    let mut p: Vec<Vec<u64>> = blocking
        .blocks()
        .iter()
        .map(|b| {
            let mut xs: Vec<u64> = b.members().iter().map(|&i| SIX_UNIT_X[i] as u64).collect();
            xs.sort_unstable();
            xs
        })
        .collect();
    p.sort();
    p
}

#[test]
fn criterion_02_optimal_blockings() {
    let sample = presets::six_unit_binary_sample();

    let threshold = DesignSpec::new(BlockingMethod::Threshold, 2);
    let t_opt = optimal_blocking_exhaustive(&sample, &threshold, DEFAULT_CEILING).unwrap();
    assert_eq!(pattern(&t_opt.blocking), vec![vec![0, 0, 0], vec![1, 1, 1]]);
    assert!(t_opt.value.abs() <= 1e-12);
    let t_var = conditional_variance_binary(&t_opt.blocking, &SIX_UNIT_X, &table_params()).unwrap();
    assert!((t_var - 0.750).abs() <= 5e-4, "threshold optimum variance {t_var}");

    let fixed = DesignSpec::new(BlockingMethod::FixedSized, 2);
    let f_opt = optimal_blocking_exhaustive(&sample, &fixed, DEFAULT_CEILING).unwrap();
    assert_eq!(pattern(&f_opt.blocking), vec![vec![0, 0], vec![0, 1], vec![1, 1]]);
    assert!((f_opt.value - 0.167).abs() <= 5e-4, "fixed optimum objective {}", f_opt.value);
    let f_var = conditional_variance_binary(&f_opt.blocking, &SIX_UNIT_X, &table_params()).unwrap();
    assert!((f_var - 0.889).abs() <= 5e-4, "fixed optimum variance {f_var}");

    pass(2, "optimal threshold and fixed-sized blockings");
}

#[test]
fn criterion_03_surrogate_quality_flip() {
    let sample = presets::six_unit_binary_sample();
    let t_opt = optimal_blocking_exhaustive(&sample, &DesignSpec::new(BlockingMethod::Threshold, 2), DEFAULT_CEILING)
        .unwrap();
    let f_opt = optimal_blocking_exhaustive(&sample, &DesignSpec::new(BlockingMethod::FixedSized, 2), DEFAULT_CEILING)
        .unwrap();

    let weak = BinaryOutcomeParams::from_predictiveness(1.0, 0.5).unwrap();
    let t_var = conditional_variance_binary(&t_opt.blocking, &SIX_UNIT_X, &weak).unwrap();
    let f_var = conditional_variance_binary(&f_opt.blocking, &SIX_UNIT_X, &weak).unwrap();
    assert!((t_var - 0.750).abs() <= 1e-3, "threshold variance at low predictiveness: {t_var}");
    assert!((f_var - 0.722).abs() <= 1e-3, "fixed variance at low predictiveness: {f_var}");
    assert!(f_var < t_var, "fixed should win when the surrogate is weak");

    let strong = table_params();
    let t_var = conditional_variance_binary(&t_opt.blocking, &SIX_UNIT_X, &strong).unwrap();
    let f_var = conditional_variance_binary(&f_opt.blocking, &SIX_UNIT_X, &strong).unwrap();
    assert!(t_var < f_var, "ordering must reverse at high predictiveness");

    pass(3, "surrogate-quality flip at low predictiveness");
}

#[test]
fn criterion_04_closed_forms_match_enumeration_oracle() {
    let start = Instant::now();
    for n in (2..=16).step_by(2) {
        for sigma2 in [0.0, 1.0, 4.0] {
            for delta_sq in [0.0, 0.5, 2.0] {
                let params = BinaryOutcomeParams::from_predictiveness(sigma2, delta_sq).unwrap();
                for design in ClassicDesign::ALL {
                    let closed = unconditional_variance_closed_form(design, n, &params).unwrap();
                    let oracle = enumerate_unconditional(design, n, &params).unwrap();
                    assert!(
                        (closed - oracle).abs() <= 1e-10,
                        "{design:?} n={n} sigma2={sigma2} delta_sq={delta_sq}: closed {closed} vs oracle {oracle}"
                    );
                }
            }
        }
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, limit 10 s");
    pass(4, "closed forms equal the draw-enumeration oracle");
}

#[test]
fn criterion_05_variance_difference_signs() {
    // uninformative covariate: threshold exceeds complete randomization
    let uninformative = BinaryOutcomeParams::from_predictiveness(1.0, 0.0).unwrap();
    for n in (6..=20).step_by(2) {
        let t = unconditional_variance_closed_form(ClassicDesign::ThresholdPairs, n, &uninformative).unwrap();
        let c = unconditional_variance_closed_form(ClassicDesign::Complete, n, &uninformative).unwrap();
        assert!(t - c > 0.0, "n={n}: threshold {t} should exceed complete {c}");
    }
    // predictive covariate (3 sigma2 < 4 delta^2): threshold beats fixed pairs
    let predictive = BinaryOutcomeParams::from_predictiveness(1.0, 1.0).unwrap();
    for n in (6..=20).step_by(2) {
        let t = unconditional_variance_closed_form(ClassicDesign::ThresholdPairs, n, &predictive).unwrap();
        let f = unconditional_variance_closed_form(ClassicDesign::FixedPairs, n, &predictive).unwrap();
        assert!(t - f < 0.0, "n={n}: threshold {t} should beat fixed {f}");
    }
    pass(5, "variance-difference sign claims");
}

#[test]
fn criterion_06_decomposition_identity() {
    let params = table_params();
    let (mu0, mu1, sd) = (params.mu0, params.mu1, params.sigma2.sqrt());
    let model = OutcomeModel::with_constant_effect(
        move |x: &[f64]| if x[0] == 1.0 { mu1 } else { mu0 },
        0.0,
        move |_| sd,
    );
    for n in (2..=16).step_by(2) {
        let cov = CovariateSpec::BinaryFairCoin { n };
        for design in ClassicDesign::ALL {
            let report = decompose(&design, &cov, &model).unwrap();
            let oracle = enumerate_unconditional(design, n, &params).unwrap();
            assert!(
                (report.total() - oracle).abs() <= 1e-10,
                "{design:?} n={n}: 4W1+4W2+2W3 = {} vs oracle {oracle}",
                report.total()
            );
            if matches!(design, ClassicDesign::Complete | ClassicDesign::FixedPairs) {
                assert_eq!(report.w3, 0.0, "{design:?} n={n}: W3 must vanish for even blocks");
            }
        }
    }
    pass(6, "three-term decomposition identity");
}

#[test]
fn criterion_07_two_covariate_counterexample() {
    let sample = presets::two_covariate_sample();
    let pairings: Vec<Blocking> =
        enumerate_blockings(6, SizeConstraint::Exactly(2), DEFAULT_CEILING).unwrap().collect();
    assert_eq!(pairings.len(), 15);

    let design = DesignSpec::new(BlockingMethod::FixedSized, 2);
    let opt = optimal_blocking_exhaustive(&sample, &design, DEFAULT_CEILING).unwrap();
    let expected = Blocking::new(vec![
        Block::new(vec![0, 3]),
        Block::new(vec![1, 4]),
        Block::new(vec![2, 5]),
    ]);
    assert_eq!(opt.blocking, expected, "surrogate optimum must pair across the binary covariate");
    assert!((opt.value - 0.500).abs() <= 1e-9, "optimum objective {}", opt.value);

    // only the first covariate predicts the outcome: mu1 = 1, mu0 = 0, sigma2 = 1
    let mu: Vec<f64> = SIX_UNIT_X.to_vec();
    let sigma2 = vec![1.0; 6];
    let paired = conditional_variance_general(&opt.blocking, &mu, &sigma2).unwrap();
    let complete = conditional_variance_general(&Blocking::single_block(6), &mu, &sigma2).unwrap();
    let delta_sq = 1.0;
    assert!(
        (paired - complete - 2.0 * delta_sq / 15.0).abs() <= 1e-12,
        "variance excess {} vs 2*delta^2/15", paired - complete
    );
    pass(7, "two-covariate pairing counterexample");
}

fn random_binary_sample(rng: &mut ChaCha8Rng, n: usize) -> Sample {
    loop {
        let xs: Vec<f64> = (0..n).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        if let Ok(s) = Sample::from_values_1d(&xs) {
            return s;
        }
    }
}

fn random_continuous_sample(rng: &mut ChaCha8Rng, n: usize) -> Sample {
    // one decimal place so duplicate covariate values occur regularly
    let xs: Vec<f64> = (0..n).map(|_| (rng.gen_range(-5.0f64..5.0) * 10.0).round() / 10.0).collect();
    Sample::from_values_1d(&xs).unwrap()
}

#[test]
fn criterion_08_threshold_dominance_property_suite() {
    let mut rng = ChaCha8Rng::seed_from_u64(8080);
    let mut checked = 0usize;
    for s in [2usize, 3] {
        for n in [4usize, 6, 8, 10] {
            if n % s != 0 {
                continue;
            }
            for kind in 0..2 {
                for _ in 0..52 {
                    let sample = if kind == 0 {
                        random_binary_sample(&mut rng, n)
                    } else {
                        random_continuous_sample(&mut rng, n)
                    };
                    let report = assert_dominance(&sample, s, ObjectiveSpec::default()).unwrap();
                    assert!(
                        report.holds,
                        "dominance violated: n={n} S={s} f(T*)={} f(F*)={}",
                        report.threshold.value, report.fixed.value
                    );
                    checked += 1;
                }
            }
        }
    }
    assert!(checked >= 500, "only {checked} samples checked");
    pass(8, "threshold dominance over 500+ random samples");
}

#[test]
fn criterion_09_dp_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut checked = 0usize;
    while checked < 520 {
        let n = 4 + (checked % 7); // 4..=10
        let sample = if checked.is_multiple_of(3) {
            random_binary_sample(&mut rng, n)
        } else {
            random_continuous_sample(&mut rng, n)
        };
        for method in [BlockingMethod::Threshold, BlockingMethod::FixedSized] {
            if method == BlockingMethod::FixedSized && !n.is_multiple_of(2) {
                continue;
            }
            let design = DesignSpec::new(method, 2);
            let dp = optimal_blocking_1d(&sample, &design).unwrap();
            let ex = optimal_blocking_exhaustive(&sample, &design, DEFAULT_CEILING).unwrap();
            assert!(
                (dp.value - ex.value).abs() <= 1e-9,
                "{method:?} n={n}: dp {} vs exhaustive {}",
                dp.value,
                ex.value
            );
        }
        checked += 1;
    }
    pass(9, "1-d dynamic program matches exhaustive optima");
}

fn ratio_rows(result: &SimulationResult) -> (Vec<f64>, Vec<f64>) {
    let ratios = result.relative_to_threshold.as_ref().expect("threshold in design list");
    let complete = ratios.iter().find(|r| r.design == BlockingMethod::Complete).unwrap();
    let fixed = ratios.iter().find(|r| r.design == BlockingMethod::FixedSized).unwrap();
    (
        vec![complete.objective, complete.pate, complete.cate, complete.sate],
        vec![fixed.objective, fixed.pate, fixed.cate, fixed.sate],
    )
}

fn assert_within(got: &[f64], want: &[f64], rel: f64, label: &str) {
    for (g, w) in got.iter().zip(want) {
        assert!(
            (g / w - 1.0).abs() <= rel,
            "{label}: got {g:.4}, want {w:.4} within {:.0}%",
            rel * 100.0
        );
    }
}

#[test]
fn criterion_10_desk_scale_simulation() {
    let mut config = SimulationConfig::new(OutcomeModelId::Informative, 12);
    config.seed = 2024;
    let informative = run_simulation(&config).unwrap();
    let (complete, fixed) = ratio_rows(&informative);

    // objective column of the relative-performance table
    assert_within(&complete[..1], &[9.14], 0.05, "informative complete objective");
    assert_within(&fixed[..1], &[1.15], 0.05, "informative fixed objective");
    // variance columns (RMSE scale)
    assert_within(&complete[1..], &[2.125, 2.149, 2.159], 0.07, "informative complete variances");
    assert_within(&fixed[1..], &[1.063, 1.064, 1.065], 0.07, "informative fixed variances");

    let mut noise_config = config.clone();
    noise_config.model = OutcomeModelId::Noise;
    let noise = run_simulation(&noise_config).unwrap();
    let (complete_noise, fixed_noise) = ratio_rows(&noise);
    assert_within(&complete_noise[1..], &[0.9841, 0.9841, 0.9711], 0.02, "noise complete variances");
    assert_within(&fixed_noise[1..], &[0.9850, 0.9850, 0.9717], 0.02, "noise fixed variances");

    // objective columns are model-independent under a shared seed
    for (a, b) in informative.designs.iter().zip(&noise.designs) {
        assert_eq!(a.objective_mean, b.objective_mean, "objective columns must match across models");
    }

    for result in [&informative, &noise] {
        // per-design MSE ordering within Monte Carlo error
        for d in &result.designs {
            let slack = 3.0 * d.pate.se.unwrap().max(d.cate.se.unwrap()).max(d.sate.se.unwrap());
            assert!(d.sate.mse <= d.cate.mse + slack, "{:?} SATE vs CATE", d.design);
            assert!(d.cate.mse <= d.pate.mse + slack, "{:?} CATE vs PATE", d.design);
        }
        // objective means respect the dominance ordering draw by draw
        let get = |m: BlockingMethod| result.designs.iter().find(|d| d.design == m).unwrap().objective_mean;
        assert!(get(BlockingMethod::Threshold) <= get(BlockingMethod::FixedSized) + 1e-12);
        assert!(get(BlockingMethod::FixedSized) <= get(BlockingMethod::Complete) + 1e-12);
    }
    pass(10, "desk-scale simulation ratios");
}

/// Full-scale check of the largest panel; slow, so excluded from CI runs
/// (`cargo test -- --ignored` executes it). Verifies sign and ordering
/// claims rather than cell values.
#[test]
#[ignore]
fn criterion_10_full_scale_n36_orderings() {
    let mut config = SimulationConfig::new(OutcomeModelId::Informative, 36);
    config.num_samples = 100_000;
    config.seed = 36;
    let informative = run_simulation(&config).unwrap();
    let (complete, fixed) = ratio_rows(&informative);
    for v in complete[1..].iter().chain(&fixed[1..]) {
        assert!(*v > 1.0, "threshold must be strictly best on variance columns, ratio {v}");
    }
    let mut noise_config = config;
    noise_config.model = OutcomeModelId::Noise;
    let noise = run_simulation(&noise_config).unwrap();
    let (complete_noise, fixed_noise) = ratio_rows(&noise);
    for v in complete_noise[1..].iter().chain(&fixed_noise[1..]) {
        assert!(*v < 1.0, "threshold must be strictly worst under the noise model, ratio {v}");
    }
    pass(10, "full-scale n=36 sign and ordering claims");
}

#[test]
fn criterion_11_randomization_moments() {
    let draws = 1_000_000u64;
    for block_size in [2usize, 3, 4, 5] {
        let blocking = Blocking::single_block(block_size);
        let block = &blocking.blocks()[0];
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for rep in 0..draws {
            let key = RandomizationKey::new(1100 + block_size as u64).with_replication(rep);
            let assignment = balanced_block_randomize(&blocking, &key).unwrap();
            let inv = 1.0 / assignment.treated_count(block) as f64;
            sum += inv;
            sum_sq += inv * inv;
        }
        let mean = sum / draws as f64;
        let sd = (sum_sq / draws as f64 - mean * mean).max(0.0).sqrt();
        let nb = block_size as f64;
        let ob = (block_size % 2) as f64;
        let want_mean = 2.0 * nb / (nb * nb - ob);
        let want_sd = 2.0 * ob / (nb * nb - 1.0);
        assert!(
            (mean - want_mean).abs() <= 1e-3,
            "n_b={block_size}: E[1/T_b] {mean} vs {want_mean}"
        );
        assert!(
            (sd - want_sd).abs() <= 1e-3,
            "n_b={block_size}: SD[1/T_b] {sd} vs {want_sd}"
        );
    }
    pass(11, "empirical 1/T_b moments match the formulas");
}
