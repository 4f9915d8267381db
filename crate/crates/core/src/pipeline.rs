//! End-to-end tests: split, tune on one part, test on the other.

use serde::{Deserialize, Serialize};

use crate::data::{PairedSample, Sample, Weighting};
use crate::error::{Error, Result};
use crate::kernel::{self, SecondLevel};
use crate::permutation::{PairedGrams, PooledTwoSample, SelectedParams, SplitAudit, TestResult};
use crate::rff::{self, RffBasis};
use crate::tuning::{self, ParamGrid, TuningReport};
use crate::util;

pub const DEFAULT_ALPHA: f64 = 0.05;
pub const DEFAULT_PERMUTATIONS: usize = 400;
pub const DEFAULT_FEATURES: usize = 50;
pub const DEFAULT_INNER_PERMUTATIONS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestConfig {
    pub alpha: f64,
    pub n_permutations: usize,
    pub n_features: usize,
    pub grid: ParamGrid,
    pub weighting: Weighting,
    /// Tune on a split; otherwise use median heuristics on all sets.
    pub tune: bool,
    pub second_level: SecondLevel,
    pub inner_permutations: usize,
    pub seed: u64,
    pub retain_null: bool,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            n_permutations: DEFAULT_PERMUTATIONS,
            n_features: DEFAULT_FEATURES,
            grid: ParamGrid::default(),
            weighting: Weighting::SetSize,
            tune: true,
            second_level: SecondLevel::Gaussian,
            inner_permutations: DEFAULT_INNER_PERMUTATIONS,
            seed: 0,
            retain_null: false,
        }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_permutations == 0 {
            return Err(Error::invalid("need at least one permutation"));
        }
        if self.n_features == 0 {
            return Err(Error::invalid("need at least one random feature"));
        }
        self.grid.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub result: TestResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tuning: Option<TuningReport>,
}

fn null_seed(seed: u64) -> u64 {
    util::derive_seed(seed, &["null"])
}

fn fingerprint_hex(fp: u64) -> String {
    format!("{fp:016x}")
}

/// Weighted two-sample test of whether `x` and `y` share a meta-distribution.
pub fn run_two_sample(x: &Sample, y: &Sample, config: &TestConfig) -> Result<Outcome> {
    config.validate()?;
    if x.dim() != y.dim() {
        return Err(Error::size(format!(
            "samples have point dimensions {} and {}",
            x.dim(),
            y.dim()
        )));
    }
    let x = x.reweighted(config.weighting);
    let y = y.reweighted(config.weighting);
    let seed = config.seed;
    let kind = config.second_level;

    let (test_x, test_y, params, report, split) = if config.tune {
        let f = config.grid.split_fraction;
        // One split seed for both samples: identical inputs stay identical after splitting.
        let split_seed = util::derive_seed(seed, &["split"]);
        let (train_x, test_x) = tuning::split_sample(&x, f, split_seed)?;
        let (train_y, test_y) = tuning::split_sample(&y, f, split_seed)?;
        let report = tuning::select_params_two_sample(&train_x, &train_y, &config.grid, config.n_features, seed, kind)?;
        let best = report.best_cell();
        let params = SelectedParams {
            level1_sq: best.level1_sq,
            level1_y_sq: None,
            level2_sq: best.level2_sq,
            level2_l_sq: None,
        };
        let split = SplitAudit {
            train_x: train_x.ids(),
            test_x: test_x.ids(),
            train_y: train_y.ids(),
            test_y: test_y.ids(),
        };
        (test_x, test_y, Some(params), Some(report), Some(split))
    } else {
        (x, y, None, None, None)
    };

    let level1_sq = match params {
        Some(p) => p.level1_sq,
        None => rff::median_heuristic_level1(
            &[&test_x, &test_y],
            rff::DEFAULT_MAX_PAIRS,
            util::derive_seed(seed, &["median1"]),
        )?,
    };
    let basis = RffBasis::sample(config.n_features, test_x.dim(), level1_sq, tuning::basis_seed(seed, "x"))?;
    let ex = basis.embed_sample(&test_x)?;
    let ey = basis.embed_sample(&test_y)?;
    let level2_sq = match params {
        Some(p) => p.level2_sq,
        None => kernel::median_heuristic_level2(&[&ex, &ey])?,
    };

    let pooled = PooledTwoSample::new(&ex, &ey, level2_sq, kind)?;
    let observed = pooled.observed();
    let nulls = pooled.null(config.n_permutations, null_seed(seed))?;
    let selected = SelectedParams {
        level1_sq,
        level1_y_sq: None,
        level2_sq,
        level2_l_sq: None,
    };
    let mut result = TestResult::from_null(observed, &nulls, config.alpha, selected, seed, config.retain_null)?;
    result.basis_fingerprints = vec![fingerprint_hex(basis.fingerprint())];
    result.split = split;
    Ok(Outcome { result, tuning: report })
}

/// Weighted independence test between the two sides of paired sets.
pub fn run_independence(sample: &PairedSample, config: &TestConfig) -> Result<Outcome> {
    config.validate()?;
    let sample = sample.reweighted(config.weighting);
    let seed = config.seed;
    let kind = config.second_level;

    let (test, tuned, report, split) = if config.tune {
        let (train, test) =
            tuning::split_paired(&sample, config.grid.split_fraction, util::derive_seed(seed, &["split"]))?;
        let report = tuning::select_params_independence(
            &train,
            &config.grid,
            config.n_features,
            config.inner_permutations,
            seed,
            kind,
        )?;
        let best = report.best_cell();
        let tuned = SelectedParams {
            level1_sq: best.level1_sq,
            level1_y_sq: best.level1_y_sq,
            level2_sq: best.level2_sq,
            level2_l_sq: best.level2_l_sq,
        };
        let split = SplitAudit {
            train_x: train.ids().to_vec(),
            test_x: test.ids().to_vec(),
            ..SplitAudit::default()
        };
        (test, Some(tuned), Some(report), Some(split))
    } else {
        (sample, None, None, None)
    };

    let (sx, sy) = (test.x_sample(), test.y_sample());
    let (level1_x, level1_y) = match tuned {
        Some(p) => (p.level1_sq, p.level1_y_sq.unwrap_or(p.level1_sq)),
        None => (
            rff::median_heuristic_level1(&[&sx], rff::DEFAULT_MAX_PAIRS, util::derive_seed(seed, &["median1", "x"]))?,
            rff::median_heuristic_level1(&[&sy], rff::DEFAULT_MAX_PAIRS, util::derive_seed(seed, &["median1", "y"]))?,
        ),
    };
    let bx = RffBasis::sample(config.n_features, sx.dim(), level1_x, tuning::basis_seed(seed, "x"))?;
    let by = RffBasis::sample(config.n_features, sy.dim(), level1_y, tuning::basis_seed(seed, "y"))?;
    let ex = bx.embed_sample(&sx)?;
    let ey = by.embed_sample(&sy)?;
    let (level2_k, level2_l) = match tuned {
        Some(p) => (p.level2_sq, p.level2_l_sq.unwrap_or(p.level2_sq)),
        None => (
            kernel::median_heuristic_level2(&[&ex])?,
            kernel::median_heuristic_level2(&[&ey])?,
        ),
    };

    let paired = PairedGrams::from_embeddings(&ex, &ey, level2_k, level2_l, kind)?;
    let observed = paired.observed();
    let nulls = paired.null(config.n_permutations, null_seed(seed))?;
    let selected = SelectedParams {
        level1_sq: level1_x,
        level1_y_sq: Some(level1_y),
        level2_sq: level2_k,
        level2_l_sq: Some(level2_l),
    };
    let mut result = TestResult::from_null(observed, &nulls, config.alpha, selected, seed, config.retain_null)?;
    result.basis_fingerprints = vec![fingerprint_hex(bx.fingerprint()), fingerprint_hex(by.fingerprint())];
    result.split = split;
    Ok(Outcome { result, tuning: report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{self, IndependenceDesign, Link, TwoSampleDesign};
    use std::collections::HashSet;

    fn small_config(seed: u64) -> TestConfig {
        TestConfig {
            n_permutations: 99,
            n_features: 20,
            grid: ParamGrid {
                level1_multipliers: vec![0.5, 1.0, 2.0],
                level2_multipliers: vec![0.5, 1.0, 2.0],
                ..ParamGrid::default()
            },
            inner_permutations: 20,
            seed,
            ..TestConfig::default()
        }
    }

    #[test]
    fn train_and_test_sets_are_disjoint() {
        let x = synthetic::gen_two_sample(&TwoSampleDesign::new(1.0, 0.1, 30, 1)).unwrap();
        let y = synthetic::gen_two_sample(&TwoSampleDesign::new(1.5, 0.1, 24, 2)).unwrap();
        let out = run_two_sample(&x, &y, &small_config(3)).unwrap();
        let split = out.result.split.unwrap();
        let train: HashSet<_> = split.train_x.iter().collect();
        assert!(split.test_x.iter().all(|id| !train.contains(id)));
        assert_eq!(split.train_x.len() + split.test_x.len(), 30);
        assert_eq!(split.train_y.len() + split.test_y.len(), 24);
        let report = out.tuning.unwrap();
        assert_eq!(out.result.selected_params.level2_sq, report.best_cell().level2_sq);
        assert_eq!(out.result.basis_fingerprints.len(), 1);
    }

    #[test]
    fn runs_are_reproducible() {
        let x = synthetic::gen_two_sample(&TwoSampleDesign::new(1.0, 0.1, 20, 5)).unwrap();
        let y = synthetic::gen_two_sample(&TwoSampleDesign::new(1.0, 0.1, 20, 6)).unwrap();
        let a = run_two_sample(&x, &y, &small_config(7)).unwrap();
        let b = run_two_sample(&x, &y, &small_config(7)).unwrap();
        assert_eq!(a, b);
        let p = synthetic::gen_independence(&IndependenceDesign::new(0.2, Link::Square, 20, 8), true).unwrap();
        assert_eq!(
            run_independence(&p, &small_config(9)).unwrap(),
            run_independence(&p, &small_config(9)).unwrap()
        );
    }

    #[test]
    fn identical_inputs_give_zero_statistic() {
        let x = synthetic::gen_two_sample(&TwoSampleDesign::new(1.0, 0.1, 20, 5)).unwrap();
        let out = run_two_sample(&x, &x, &small_config(1)).unwrap();
        assert_eq!(out.result.statistic, 0.0);
        assert_eq!(out.result.p_value, 1.0);
        let mut cfg = small_config(1);
        cfg.tune = false;
        let out = run_two_sample(&x, &x, &cfg).unwrap();
        assert_eq!(out.result.statistic, 0.0);
        assert!(out.result.p_value > 0.9);
        assert!(out.tuning.is_none() && out.result.split.is_none());
    }

    #[test]
    fn strong_signals_are_detected() {
        let x = synthetic::gen_two_sample(&TwoSampleDesign::new(0.0, 0.01, 40, 11)).unwrap();
        let y = synthetic::gen_two_sample(&TwoSampleDesign::new(3.0, 0.01, 40, 12)).unwrap();
        let out = run_two_sample(&x, &y, &small_config(2)).unwrap();
        assert!(out.result.reject, "p = {}", out.result.p_value);
        let p = synthetic::gen_independence(&IndependenceDesign::new(0.05, Link::Square, 80, 3), true).unwrap();
        let out = run_independence(&p, &small_config(4)).unwrap();
        assert!(out.result.reject, "p = {}", out.result.p_value);
        assert_eq!(out.result.basis_fingerprints.len(), 2);
    }

    #[test]
    fn too_small_for_split() {
        let x = synthetic::gen_two_sample(&TwoSampleDesign::new(1.0, 0.1, 3, 5)).unwrap();
        assert!(run_two_sample(&x, &x, &small_config(1)).is_err());
    }
}
