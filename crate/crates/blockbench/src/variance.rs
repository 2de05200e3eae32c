//! Analytic variances of the within-block difference-in-means estimator
//! under balanced block randomization and constant treatment effects.
//!
//! Conditional variances are returned raw (Var(est | x, B)); unconditional
//! variances are normalized (n * Var), matching how each is usually quoted.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Block, Blocking};

/// Outcome-model parameters for a single binary covariate: constant
/// conditional variance plus the two conditional means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryOutcomeParams {
    pub mu0: f64,
    pub mu1: f64,
    pub sigma2: f64,
    delta_mu_sq: f64,
}

impl BinaryOutcomeParams {
    pub fn new(mu0: f64, mu1: f64, sigma2: f64) -> Result<Self> {
        if sigma2 < 0.0 || !sigma2.is_finite() {
            return Err(Error::InvalidSample(format!("sigma2 must be a finite nonnegative real, got {sigma2}")));
        }
        let d = mu1 - mu0;
        Ok(BinaryOutcomeParams { mu0, mu1, sigma2, delta_mu_sq: d * d })
    }

    /// Parameters pinned down by predictiveness alone: mu0 = 0,
    /// mu1 = sqrt(delta_mu_sq).
    pub fn from_predictiveness(sigma2: f64, delta_mu_sq: f64) -> Result<Self> {
        if delta_mu_sq < 0.0 {
            return Err(Error::InvalidSample(format!("(mu1 - mu0)^2 cannot be negative, got {delta_mu_sq}")));
        }
        let mut params = BinaryOutcomeParams::new(0.0, delta_mu_sq.sqrt(), sigma2)?;
        params.delta_mu_sq = delta_mu_sq;
        Ok(params)
    }

    /// (mu1 - mu0)^2, the covariate-predictiveness measure.
    pub fn delta_mu_sq(&self) -> f64 {
        self.delta_mu_sq
    }
}

fn parity_factor(block: &Block) -> f64 {
    let nb = block.len() as f64;
    1.0 + block.parity() as f64 / (nb * nb - 1.0)
}

/// Conditional variance Var(est | x, B) for arbitrary per-unit conditional
/// means and variances:
///
/// (4/n) sum_b (n_b/n) (1 + o_b/(n_b^2-1))
///       [ sum_i sigma2_i/n_b + (1/(2 n_b (n_b-1))) sum_{i,j} (mu_i - mu_j)^2 ]
pub fn conditional_variance_general(blocking: &Blocking, mu: &[f64], sigma2: &[f64]) -> Result<f64> {
    let n = blocking.num_units();
    if mu.len() != n || sigma2.len() != n {
        return Err(Error::InvalidSample(format!(
            "need one mu and one sigma2 per blocked unit (n = {n}, got {} and {})",
            mu.len(),
            sigma2.len()
        )));
    }
    let mut total = 0.0;
    for block in blocking.blocks() {
        let nb = block.len();
        if nb < 2 {
            return Err(Error::SizeOneBlock);
        }
        let members = block.members();
        let noise: f64 = members.iter().map(|&i| sigma2[i]).sum::<f64>() / nb as f64;
        let mut spread = 0.0;
        for (k, &i) in members.iter().enumerate() {
            for &j in &members[k + 1..] {
                let d = mu[i] - mu[j];
                spread += d * d;
            }
        }
        // ordered pairs double the i<j sum
        let spread_term = 2.0 * spread / (2.0 * nb as f64 * (nb as f64 - 1.0));
        total += nb as f64 / n as f64 * parity_factor(block) * (noise + spread_term);
    }
    Ok(4.0 / n as f64 * total)
}

/// Conditional variance for a single binary covariate with constant
/// conditional variance: (4/n) sum_b (n_b/n)(1 + o_b/(n_b^2-1))
/// (sigma2 + s2_xb (mu1-mu0)^2), with s2_xb the unbiased within-block
/// sample variance of x.
pub fn conditional_variance_binary(blocking: &Blocking, x: &[f64], params: &BinaryOutcomeParams) -> Result<f64> {
    let n = blocking.num_units();
    if x.len() != n {
        return Err(Error::InvalidSample(format!("need one covariate per blocked unit (n = {n}, got {})", x.len())));
    }
    if x.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidSample("binary specialization needs covariates in {0, 1}".into()));
    }
    let delta_sq = params.delta_mu_sq();
    let mut total = 0.0;
    for block in blocking.blocks() {
        let nb = block.len();
        if nb < 2 {
            return Err(Error::SizeOneBlock);
        }
        let mean: f64 = block.members().iter().map(|&i| x[i]).sum::<f64>() / nb as f64;
        let s2: f64 = block
            .members()
            .iter()
            .map(|&i| (x[i] - mean) * (x[i] - mean))
            .sum::<f64>()
            / (nb as f64 - 1.0);
        total += nb as f64 / n as f64 * parity_factor(block) * (params.sigma2 + s2 * delta_sq);
    }
    Ok(4.0 / n as f64 * total)
}

/// The three designs with closed-form unconditional variances when the
/// covariate is an independent fair coin: complete randomization, optimal
/// fixed-sized blocking with S = 2, optimal threshold blocking with S = 2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassicDesign {
    Complete,
    FixedPairs,
    ThresholdPairs,
}

impl ClassicDesign {
    pub const ALL: [ClassicDesign; 3] =
        [ClassicDesign::Complete, ClassicDesign::FixedPairs, ClassicDesign::ThresholdPairs];

    pub fn label(&self) -> &'static str {
        match self {
            ClassicDesign::Complete => "complete",
            ClassicDesign::FixedPairs => "fixed-sized (S=2)",
            ClassicDesign::ThresholdPairs => "threshold (S=2)",
        }
    }
}

fn homogeneous_pairs(ones: &[usize], zeros: &[usize]) -> Vec<Block> {
    let mut blocks = Vec::new();
    for group in [ones, zeros] {
        for pair in group.chunks_exact(2) {
            blocks.push(Block::new(pair.to_vec()));
        }
    }
    blocks
}

/// The sample-to-blocking mapping each design applies to a binary draw.
/// The threshold tie-break: homogeneous pairs when the covariate sum is
/// even; two triples when it is odd and both values have at least three
/// units; one mixed pair when a value has a single unit.
pub fn binary_design_blocking(design: ClassicDesign, x: &[f64]) -> Result<Blocking> {
    let n = x.len();
    if x.iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidSample("design mappings need covariates in {0, 1}".into()));
    }
    if design == ClassicDesign::Complete {
        return Ok(Blocking::single_block(n));
    }
    if !n.is_multiple_of(2) {
        return Err(Error::OddSampleSize { context: "pairable designs", n });
    }
    let ones: Vec<usize> = (0..n).filter(|&i| x[i] == 1.0).collect();
    let zeros: Vec<usize> = (0..n).filter(|&i| x[i] == 0.0).collect();
    let k = ones.len();

    let blocks = if k.is_multiple_of(2) {
        homogeneous_pairs(&ones, &zeros)
    } else {
        match design {
            ClassicDesign::FixedPairs => {
                // one mixed pair from the leftover of each value
                let mut blocks = homogeneous_pairs(&ones[..k - 1], &zeros[..zeros.len() - 1]);
                blocks.push(Block::new(vec![ones[k - 1], zeros[zeros.len() - 1]]));
                blocks
            }
            ClassicDesign::ThresholdPairs => {
                if k == 1 || k == n - 1 {
                    // a unit alone with its covariate value forces a mixed pair
                    let mut blocks = homogeneous_pairs(&ones[..k - 1], &zeros[..zeros.len() - 1]);
                    blocks.push(Block::new(vec![ones[k - 1], zeros[zeros.len() - 1]]));
                    blocks
                } else {
                    // one triple per covariate value keeps every block homogeneous
                    let mut blocks = vec![Block::new(ones[..3].to_vec()), Block::new(zeros[..3].to_vec())];
                    blocks.extend(homogeneous_pairs(&ones[3..], &zeros[3..]));
                    blocks
                }
            }
            ClassicDesign::Complete => unreachable!(),
        }
    };
    Ok(Blocking::new(blocks))
}

fn check_even(n: usize) -> Result<()> {
    if n == 0 || !n.is_multiple_of(2) {
        return Err(Error::OddSampleSize { context: "closed-form variances", n });
    }
    Ok(())
}

/// Closed-form normalized unconditional variance n * Var for a fair-coin
/// binary covariate:
///   complete:        4 sigma2 + (mu1-mu0)^2
///   fixed pairs:     4 sigma2 + 2 (mu1-mu0)^2 / n
///   threshold pairs: 4 sigma2 + 8 (mu1-mu0)^2 / 2^n
///                    + 3 (2^(n-1) - 2n) sigma2 / (2^n n)
///
/// At n = 2 the threshold admissible set holds only the single pair, so the
/// fixed-pairs expression applies (the three-term display assumes n >= 4).
pub fn unconditional_variance_closed_form(design: ClassicDesign, n: usize, params: &BinaryOutcomeParams) -> Result<f64> {
    check_even(n)?;
    let s2 = params.sigma2;
    let d2 = params.delta_mu_sq();
    let nf = n as f64;
    Ok(match design {
        ClassicDesign::Complete => 4.0 * s2 + d2,
        ClassicDesign::FixedPairs => 4.0 * s2 + 2.0 * d2 / nf,
        ClassicDesign::ThresholdPairs => {
            if n == 2 {
                4.0 * s2 + 2.0 * d2 / nf
            } else {
                let two_n = (2.0f64).powi(n as i32);
                4.0 * s2 + 8.0 * d2 / two_n + 3.0 * (two_n / 2.0 - 2.0 * nf) * s2 / (two_n * nf)
            }
        }
    })
}

fn binomial_u128(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Exact normalized unconditional variance by enumerating covariate draws.
/// Every design mapping depends on the draw only through the covariate sum,
/// so the expectation runs over sum values with binomial weights instead of
/// all 2^n raw draws.
pub fn enumerate_unconditional(design: ClassicDesign, n: usize, params: &BinaryOutcomeParams) -> Result<f64> {
    check_even(n)?;
    let two_n = (2.0f64).powi(n as i32);
    let mut total = 0.0;
    for k in 0..=n {
        let weight = binomial_u128(n, k) as f64 / two_n;
        let mut x = vec![0.0; n];
        for xi in x.iter_mut().take(k) {
            *xi = 1.0;
        }
        let blocking = binary_design_blocking(design, &x)?;
        let raw = conditional_variance_binary(&blocking, &x, params)?;
        total += weight * n as f64 * raw;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;
    use approx::assert_abs_diff_eq;

    fn table_params() -> BinaryOutcomeParams {
        BinaryOutcomeParams::from_predictiveness(1.0, 2.0).unwrap()
    }

    /// Exact Var(est | x, B) by enumerating every balanced assignment of
    /// every block, using only per-unit moments, constant effects, and
    /// block independence. Shares no code with the closed formulas.
    fn assignment_enumeration_variance(blocking: &Blocking, mu: &[f64], sigma2: &[f64], delta: f64) -> f64 {
        let n = blocking.num_units() as f64;
        let mut total = 0.0;
        for block in blocking.blocks() {
            let members = block.members();
            let nb = members.len();
            let splits: Vec<(usize, f64)> = if nb % 2 == 0 {
                vec![(nb / 2, 1.0)]
            } else {
                vec![(nb / 2, 0.5), (nb / 2 + 1, 0.5)]
            };
            let mut e_d = 0.0;
            let mut e_d2 = 0.0;
            for (treat, p_count) in splits {
                let masks: Vec<u32> =
                    (0u32..1 << nb).filter(|m| m.count_ones() as usize == treat).collect();
                let p = p_count / masks.len() as f64;
                for mask in masks {
                    let control = nb - treat;
                    let mut mean = delta;
                    let mut var = 0.0;
                    for (k, &i) in members.iter().enumerate() {
                        if mask >> k & 1 == 1 {
                            mean += mu[i] / treat as f64;
                            var += sigma2[i] / (treat * treat) as f64;
                        } else {
                            mean -= mu[i] / control as f64;
                            var += sigma2[i] / (control * control) as f64;
                        }
                    }
                    e_d += p * mean;
                    e_d2 += p * (var + mean * mean);
                }
            }
            let var_b = e_d2 - e_d * e_d;
            total += (nb as f64 / n) * (nb as f64 / n) * var_b;
        }
        total
    }

    #[test]
    fn binary_formula_matches_assignment_enumeration() {
        let x = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let params = table_params();
        let mu: Vec<f64> = x.iter().map(|&v| if v == 1.0 { params.mu1 } else { params.mu0 }).collect();
        let sigma2 = vec![params.sigma2; 6];
        for blocking in presets::six_unit_pattern_blockings() {
            let formula = conditional_variance_binary(&blocking, &x, &params).unwrap();
            // a nonzero constant effect must not change the variance
            let oracle = assignment_enumeration_variance(&blocking, &mu, &sigma2, 1.3);
            assert_abs_diff_eq!(formula, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn general_formula_matches_assignment_enumeration_with_heterogeneous_moments() {
        let mu = [0.5, -1.0, 2.0, 0.0, 3.5, 1.25];
        let sigma2 = [1.0, 0.25, 2.0, 0.5, 1.5, 0.75];
        for blocking in [
            Blocking::new(vec![Block::new(vec![0, 2, 4]), Block::new(vec![1, 3, 5])]),
            Blocking::new(vec![Block::new(vec![0, 5]), Block::new(vec![1, 2, 3, 4])]),
            Blocking::single_block(6),
        ] {
            let formula = conditional_variance_general(&blocking, &mu, &sigma2).unwrap();
            let oracle = assignment_enumeration_variance(&blocking, &mu, &sigma2, -0.7);
            assert_abs_diff_eq!(formula, oracle, epsilon = 1e-12);
        }
    }

    #[test]
    fn six_unit_variance_column() {
        let x = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let expected = [1.333, 0.889, 0.750, 1.250, 0.889, 1.185, 0.889, 1.067];
        for (blocking, want) in presets::six_unit_pattern_blockings().iter().zip(expected) {
            let got = conditional_variance_binary(blocking, &x, &table_params()).unwrap();
            assert_abs_diff_eq!(got, want, epsilon = 5e-4);
        }
    }

    #[test]
    fn surrogate_quality_example() {
        let x = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let params = BinaryOutcomeParams::from_predictiveness(1.0, 0.5).unwrap();
        let fixed_opt = &presets::six_unit_pattern_blockings()[1]; // {{1,1},{1,0},{0,0}}
        assert_abs_diff_eq!(
            conditional_variance_binary(fixed_opt, &x, &params).unwrap(),
            0.722,
            epsilon = 1e-3
        );
        let threshold_opt = &presets::six_unit_pattern_blockings()[2]; // {{1,1,1},{0,0,0}}
        assert_abs_diff_eq!(
            conditional_variance_binary(threshold_opt, &x, &params).unwrap(),
            0.750,
            epsilon = 1e-3
        );
    }

    #[test]
    fn general_formula_on_the_two_covariate_sample() {
        // each block mixes the binary covariate: 2 sigma2/3 + delta^2/3
        let pairing = Blocking::new(vec![
            Block::new(vec![0, 3]),
            Block::new(vec![1, 4]),
            Block::new(vec![2, 5]),
        ]);
        let mu = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let sigma2 = [1.0; 6];
        let got = conditional_variance_general(&pairing, &mu, &sigma2).unwrap();
        assert_abs_diff_eq!(got, 2.0 / 3.0 + 1.0 / 3.0, epsilon = 1e-12);

        let single = Blocking::single_block(6);
        let got = conditional_variance_general(&single, &mu, &sigma2).unwrap();
        assert_abs_diff_eq!(got, 2.0 / 3.0 + 1.0 / 5.0, epsilon = 1e-12);
    }

    #[test]
    fn no_outcome_variation_means_zero_variance() {
        let b = Blocking::new(vec![Block::new(vec![0, 1]), Block::new(vec![2, 3])]);
        let got = conditional_variance_general(&b, &[3.0; 4], &[0.0; 4]).unwrap();
        assert_eq!(got, 0.0);
    }

    #[test]
    fn general_specializes_to_binary() {
        let x = [1.0, 1.0, 1.0, 0.0, 0.0, 0.0];
        let params = table_params();
        let mu: Vec<f64> = x.iter().map(|&v| if v == 1.0 { params.mu1 } else { params.mu0 }).collect();
        let sigma2 = vec![params.sigma2; 6];
        for blocking in presets::six_unit_pattern_blockings() {
            let general = conditional_variance_general(&blocking, &mu, &sigma2).unwrap();
            let binary = conditional_variance_binary(&blocking, &x, &params).unwrap();
            assert_abs_diff_eq!(general, binary, epsilon = 1e-12);
        }
    }

    #[test]
    fn variance_is_monotone_in_sigma2_and_predictiveness() {
        let x = [1.0, 1.0, 0.0, 0.0, 1.0, 0.0];
        let blocking = Blocking::new(vec![Block::new(vec![0, 2]), Block::new(vec![1, 3]), Block::new(vec![4, 5])]);
        let base = conditional_variance_binary(&blocking, &x, &table_params()).unwrap();
        let more_noise = BinaryOutcomeParams::from_predictiveness(2.0, 2.0).unwrap();
        assert!(conditional_variance_binary(&blocking, &x, &more_noise).unwrap() > base);
        let more_signal = BinaryOutcomeParams::from_predictiveness(1.0, 4.0).unwrap();
        assert!(conditional_variance_binary(&blocking, &x, &more_signal).unwrap() > base);
    }

    #[test]
    fn size_one_blocks_are_rejected() {
        let b = Blocking::new(vec![Block::new(vec![0]), Block::new(vec![1, 2])]);
        assert!(matches!(
            conditional_variance_binary(&b, &[1.0, 0.0, 1.0], &table_params()),
            Err(Error::SizeOneBlock)
        ));
        assert!(matches!(
            conditional_variance_general(&b, &[0.0; 3], &[1.0; 3]),
            Err(Error::SizeOneBlock)
        ));
    }

    #[test]
    fn closed_forms_at_n_six() {
        let p = table_params();
        assert_abs_diff_eq!(unconditional_variance_closed_form(ClassicDesign::Complete, 6, &p).unwrap(), 6.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            unconditional_variance_closed_form(ClassicDesign::FixedPairs, 6, &p).unwrap(),
            4.0 + 2.0 / 3.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            unconditional_variance_closed_form(ClassicDesign::ThresholdPairs, 6, &p).unwrap(),
            4.40625,
            epsilon = 1e-12
        );
    }

    #[test]
    fn uninformative_covariate_makes_threshold_worse_than_complete() {
        let p = BinaryOutcomeParams::from_predictiveness(1.0, 0.0).unwrap();
        let t = unconditional_variance_closed_form(ClassicDesign::ThresholdPairs, 6, &p).unwrap();
        let c = unconditional_variance_closed_form(ClassicDesign::Complete, 6, &p).unwrap();
        assert_abs_diff_eq!(t - c, 0.15625, epsilon = 1e-12);
        // and fixed pairs collapse to the complete value
        let f = unconditional_variance_closed_form(ClassicDesign::FixedPairs, 6, &p).unwrap();
        assert_abs_diff_eq!(f, c, epsilon = 1e-12);
    }

    #[test]
    fn predictive_covariate_favours_threshold_over_fixed() {
        // 3 sigma2 < 4 (mu1-mu0)^2
        let p = BinaryOutcomeParams::from_predictiveness(1.0, 1.0).unwrap();
        let t = unconditional_variance_closed_form(ClassicDesign::ThresholdPairs, 6, &p).unwrap();
        let f = unconditional_variance_closed_form(ClassicDesign::FixedPairs, 6, &p).unwrap();
        let expected = (32.0 - 12.0) / (64.0 * 6.0) * (3.0 - 4.0);
        assert_abs_diff_eq!(t - f, expected, epsilon = 1e-12);
        assert!(t < f);
    }

    #[test]
    fn enumeration_matches_closed_forms() {
        let p = table_params();
        for design in ClassicDesign::ALL {
            let closed = unconditional_variance_closed_form(design, 6, &p).unwrap();
            let enumerated = enumerate_unconditional(design, 6, &p).unwrap();
            assert_abs_diff_eq!(closed, enumerated, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_unit_threshold_equals_fixed() {
        let p = table_params();
        let t = enumerate_unconditional(ClassicDesign::ThresholdPairs, 2, &p).unwrap();
        let f = enumerate_unconditional(ClassicDesign::FixedPairs, 2, &p).unwrap();
        assert_abs_diff_eq!(t, f, epsilon = 1e-14);
        let t_closed = unconditional_variance_closed_form(ClassicDesign::ThresholdPairs, 2, &p).unwrap();
        assert_abs_diff_eq!(t_closed, t, epsilon = 1e-12);
    }

    #[test]
    fn odd_sample_sizes_are_rejected() {
        let p = table_params();
        assert!(unconditional_variance_closed_form(ClassicDesign::Complete, 5, &p).is_err());
        assert!(enumerate_unconditional(ClassicDesign::FixedPairs, 7, &p).is_err());
    }

    #[test]
    fn design_mappings_produce_expected_shapes() {
        // covariate sum odd and both values well represented: two triples
        let x = [1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let mut x = x;
        x[4] = 0.0; // 4 ones, make it odd:
        x[3] = 0.0; // now 3 ones, 9 zeros
        let t = binary_design_blocking(ClassicDesign::ThresholdPairs, &x).unwrap();
        let mut sizes: Vec<usize> = t.blocks().iter().map(Block::len).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![2, 2, 2, 3, 3]);

        // single unit alone with its value: one mixed pair instead
        let mut lonely = vec![0.0; 6];
        lonely[2] = 1.0;
        let t = binary_design_blocking(ClassicDesign::ThresholdPairs, &lonely).unwrap();
        let sizes: Vec<usize> = t.blocks().iter().map(Block::len).collect();
        assert_eq!(sizes, vec![2, 2, 2]);
        let f = binary_design_blocking(ClassicDesign::FixedPairs, &lonely).unwrap();
        assert_eq!(t, f);
    }
}
