//! Fixed-dimensional comparators: series interpolated onto a common time
//! grid and fed to plain MMD/HSIC, and a permutation Pearson correlation test.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ObservationSet, PairedSample, Sample};
use crate::error::{Error, Result};
use crate::kernel::{self, SecondLevel};
use crate::permutation::{PairedGrams, PooledTwoSample, SelectedParams, SplitAudit, TestResult};
use crate::pipeline::{Outcome, TestConfig};
use crate::rff::EmbeddedSample;
use crate::tuning::{self, TuningCell, TuningReport};
use crate::util::{self, par_map};

pub const DEFAULT_GRID_SIZE: usize = 20;

/// A series evaluated at `grid_size` equispaced times on `[0, 1]`, channels
/// concatenated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSeries {
    pub values: Vec<f64>,
    pub grid_size: usize,
}

impl GridSeries {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Natural cubic spline through sorted knots.
struct Spline {
    t: Vec<f64>,
    y: Vec<f64>,
    m: Vec<f64>,
}

impl Spline {
    fn fit(t: Vec<f64>, y: Vec<f64>) -> Self {
        let n = t.len();
        let mut m = vec![0.0; n];
        if n > 2 {
            let h: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
            // Tridiagonal system for the interior second derivatives.
            let k = n - 2;
            let mut diag = vec![0.0; k];
            let mut rhs = vec![0.0; k];
            for i in 0..k {
                diag[i] = 2.0 * (h[i] + h[i + 1]);
                rhs[i] = 6.0 * ((y[i + 2] - y[i + 1]) / h[i + 1] - (y[i + 1] - y[i]) / h[i]);
            }
            for i in 1..k {
                let f = h[i] / diag[i - 1];
                diag[i] -= f * h[i];
                rhs[i] -= f * rhs[i - 1];
            }
            m[k] = rhs[k - 1] / diag[k - 1];
            for i in (0..k - 1).rev() {
                m[i + 1] = (rhs[i] - h[i + 1] * m[i + 2]) / diag[i];
            }
        }
        Self { t, y, m }
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.t.len();
        let x = x.clamp(self.t[0], self.t[n - 1]);
        let i = match self.t.partition_point(|&ti| ti <= x) {
            0 => 0,
            p => (p - 1).min(n - 2),
        };
        let (t0, t1) = (self.t[i], self.t[i + 1]);
        let h = t1 - t0;
        let (a, b) = (t1 - x, x - t0);
        let (m0, m1) = (self.m[i], self.m[i + 1]);
        m0 * a.powi(3) / (6.0 * h)
            + m1 * b.powi(3) / (6.0 * h)
            + (self.y[i] / h - m0 * h / 6.0) * a
            + (self.y[i + 1] / h - m1 * h / 6.0) * b
    }
}

/// Spline every value channel of `set` (points `(t, x_1, ..)`) onto `grid_size`
/// equispaced times; outside the observed time range the boundary value is held.
pub fn spline_to_grid(set: &ObservationSet, grid_size: usize) -> Result<GridSeries> {
    if grid_size < 2 {
        return Err(Error::invalid(format!("grid size must be at least 2, got {grid_size}")));
    }
    if set.dim() < 2 {
        return Err(Error::invalid(format!(
            "set `{}` has no value channel after the time coordinate",
            set.id()
        )));
    }
    let mut pts: Vec<&Vec<f64>> = set.points().iter().collect();
    if let Some(p) = pts.iter().find(|p| !(0.0..=1.0).contains(&p[0])) {
        return Err(Error::invalid(format!("set `{}`: time {} outside [0, 1]", set.id(), p[0])));
    }
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
    let channels = set.dim() - 1;
    // Average values observed at the same time.
    let mut times: Vec<f64> = Vec::new();
    let mut sums: Vec<Vec<f64>> = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    for p in pts {
        if times.last() == Some(&p[0]) {
            let last = sums.len() - 1;
            for c in 0..channels {
                sums[last][c] += p[c + 1];
            }
            counts[last] += 1.0;
        } else {
            times.push(p[0]);
            sums.push(p[1..].to_vec());
            counts.push(1.0);
        }
    }
    if times.len() < 2 {
        return Err(Error::invalid(format!(
            "set `{}` needs at least 2 distinct times to interpolate",
            set.id()
        )));
    }
    let mut values = Vec::with_capacity(grid_size * channels);
    for c in 0..channels {
        let y: Vec<f64> = sums.iter().zip(&counts).map(|(s, n)| s[c] / n).collect();
        let spline = Spline::fit(times.clone(), y);
        values.extend((0..grid_size).map(|k| spline.eval(k as f64 / (grid_size - 1) as f64)));
    }
    Ok(GridSeries { values, grid_size })
}

pub fn grids_of(sets: &[ObservationSet], grid_size: usize) -> Result<Vec<GridSeries>> {
    sets.iter().map(|s| spline_to_grid(s, grid_size)).collect()
}

/// Identifier standing in for a random feature basis on grid vectors.
pub fn grid_fingerprint(grid_size: usize) -> u64 {
    util::derive_seed(grid_size as u64, &["spline-grid"])
}

fn as_embedded(grids: &[GridSeries]) -> Result<EmbeddedSample> {
    let first = grids
        .first()
        .ok_or_else(|| Error::invalid("no grid series"))?;
    if grids
        .iter()
        .any(|g| g.grid_size != first.grid_size || g.values.len() != first.values.len())
    {
        return Err(Error::size("grid series differ in grid size or channel count"));
    }
    let n = grids.len();
    EmbeddedSample::new(
        grids.iter().map(|g| g.values.clone()).collect(),
        vec![1.0 / n as f64; n],
        grid_fingerprint(first.grid_size),
    )
}

/// Gaussian-kernel MMD² V-statistic on grid vectors with a regrouping null.
pub fn fixed_mmd_test(
    grids_x: &[GridSeries],
    grids_y: &[GridSeries],
    lengthscale_sq: f64,
    n_permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestResult> {
    let (ex, ey) = (as_embedded(grids_x)?, as_embedded(grids_y)?);
    let pooled = PooledTwoSample::new(&ex, &ey, lengthscale_sq, SecondLevel::Gaussian)?;
    let nulls = pooled.null(n_permutations, seed)?;
    let params = SelectedParams {
        level2_sq: lengthscale_sq,
        ..SelectedParams::default()
    };
    TestResult::from_null(pooled.observed(), &nulls, alpha, params, seed, false)
}

/// Uniform-weight HSIC `Tr(KHLH)/N²` on grid vectors with a re-pairing null.
pub fn fixed_hsic_test(
    grids_x: &[GridSeries],
    grids_y: &[GridSeries],
    lengthscale_k: f64,
    lengthscale_l: f64,
    n_permutations: usize,
    alpha: f64,
    seed: u64,
) -> Result<TestResult> {
    let (ex, ey) = (as_embedded(grids_x)?, as_embedded(grids_y)?);
    let paired = PairedGrams::from_embeddings(&ex, &ey, lengthscale_k, lengthscale_l, SecondLevel::Gaussian)?;
    let nulls = paired.null(n_permutations, seed)?;
    let params = SelectedParams {
        level2_sq: lengthscale_k,
        level2_l_sq: Some(lengthscale_l),
        ..SelectedParams::default()
    };
    TestResult::from_null(paired.observed(), &nulls, alpha, params, seed, false)
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::size(format!("correlation of {} and {} values", x.len(), y.len())));
    }
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if !(sxx > 0.0 && syy > 0.0) {
        return Err(Error::DegenerateScale("correlation of a constant variable".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Two-sided permutation test of zero Pearson correlation.
///
/// The reported statistic is the signed correlation; the p-value compares
/// absolute values against shuffles of `y`.
pub fn pcc_perm_test(x: &[f64], y: &[f64], n_permutations: usize, alpha: f64, seed: u64) -> Result<TestResult> {
    pcc_with_null(x, y, n_permutations, alpha, seed, false)
}

fn pcc_with_null(
    x: &[f64],
    y: &[f64],
    n_permutations: usize,
    alpha: f64,
    seed: u64,
    retain_null: bool,
) -> Result<TestResult> {
    if x.len() < 3 || x.len() != y.len() {
        return Err(Error::size(format!(
            "correlation test needs two equal-length vectors of at least 3 values, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    if n_permutations == 0 {
        return Err(Error::invalid("need at least one permutation"));
    }
    let rho = pearson(x, y)?;
    let nulls: Vec<f64> = par_map(n_permutations, |b| {
        let mut rng = util::replicate_rng(seed, b as u64);
        let mut shuffled = y.to_vec();
        shuffled.shuffle(&mut rng);
        pearson(x, &shuffled).map_or(0.0, f64::abs)
    });
    let mut result = TestResult::from_null(rho.abs(), &nulls, alpha, SelectedParams::default(), seed, retain_null)?;
    result.statistic = rho;
    Ok(result)
}

fn grid_cell(mk: f64, lk: f64, stat: f64, sd: f64, ridge: f64) -> TuningCell {
    TuningCell {
        level1_multiplier: 1.0,
        level1_sq: 0.0,
        level1_y_sq: None,
        level2_multiplier: mk,
        level2_sq: lk,
        level2_l_multiplier: None,
        level2_l_sq: None,
        statistic: stat,
        null_mean: None,
        spread: sd,
        criterion: stat / (sd + ridge),
    }
}

/// Spline baseline for the two-sample problem with the same split and
/// bandwidth search as the set-embedding test (level-2 grid only).
pub fn run_fixed_two_sample(x: &Sample, y: &Sample, grid_size: usize, config: &TestConfig) -> Result<Outcome> {
    config.validate()?;
    let gx = as_embedded(&grids_of(x.sets(), grid_size)?)?;
    let gy = as_embedded(&grids_of(y.sets(), grid_size)?)?;
    let seed = config.seed;
    let (test_x, test_y, ls, report, split) = if config.tune {
        let f = config.grid.split_fraction;
        // One split seed for both samples: identical inputs stay identical after splitting.
        let split_seed = util::derive_seed(seed, &["split"]);
        let (tr_x, te_x) = tuning::split_indices(gx.len(), f, split_seed)?;
        let (tr_y, te_y) = tuning::split_indices(gy.len(), f, split_seed)?;
        let (train_x, train_y) = (gx.subset(&tr_x)?, gy.subset(&tr_y)?);
        let cells = tuning::level2_cells_two_sample(
            &train_x,
            &train_y,
            &config.grid.level2_multipliers,
            config.grid.ridge,
            SecondLevel::Gaussian,
            seed,
        )?
        .into_iter()
        .map(|(m, l, stat, sd, _)| grid_cell(m, l, stat, sd, config.grid.ridge))
        .collect();
        let report = TuningReport::from_cells(cells, seed)?;
        let ids = |s: &Sample, idx: &[usize]| idx.iter().map(|&i| s.sets()[i].id().to_string()).collect();
        let split = SplitAudit {
            train_x: ids(x, &tr_x),
            test_x: ids(x, &te_x),
            train_y: ids(y, &tr_y),
            test_y: ids(y, &te_y),
        };
        let ls = report.best_cell().level2_sq;
        (gx.subset(&te_x)?, gy.subset(&te_y)?, ls, Some(report), Some(split))
    } else {
        let ls = kernel::median_heuristic_level2(&[&gx, &gy])?;
        (gx, gy, ls, None, None)
    };
    let pooled = PooledTwoSample::new(&test_x, &test_y, ls, SecondLevel::Gaussian)?;
    let nulls = pooled.null(config.n_permutations, util::derive_seed(seed, &["null"]))?;
    let params = SelectedParams {
        level2_sq: ls,
        ..SelectedParams::default()
    };
    let mut result = TestResult::from_null(pooled.observed(), &nulls, config.alpha, params, seed, config.retain_null)?;
    result.split = split;
    Ok(Outcome { result, tuning: report })
}

/// Spline baseline for the independence problem.
pub fn run_fixed_independence(sample: &PairedSample, grid_size: usize, config: &TestConfig) -> Result<Outcome> {
    config.validate()?;
    let gx = as_embedded(&grids_of(sample.x_sets(), grid_size)?)?;
    let gy = as_embedded(&grids_of(sample.y_sets(), grid_size)?)?;
    let seed = config.seed;
    let (test_x, test_y, lk, ll, report, split) = if config.tune {
        let (tr, te) = tuning::split_indices(sample.len(), config.grid.split_fraction, util::derive_seed(seed, &["split"]))?;
        let cells = tuning::level2_cells_independence(
            &gx.subset(&tr)?,
            &gy.subset(&tr)?,
            &config.grid.level2_multipliers,
            SecondLevel::Gaussian,
            config.inner_permutations.max(tuning::MIN_INNER_PERMUTATIONS),
            seed,
        )?
        .into_iter()
        .map(|c| TuningCell {
            level2_l_multiplier: Some(c.l_multiplier),
            level2_l_sq: Some(c.l_sq),
            null_mean: Some(c.null_mean),
            criterion: c.criterion(config.grid.ridge),
            ..grid_cell(c.k_multiplier, c.k_sq, c.statistic, c.null_sd, config.grid.ridge)
        })
        .collect();
        let report = TuningReport::from_cells(cells, seed)?;
        let ids = |idx: &[usize]| idx.iter().map(|&i| sample.ids()[i].clone()).collect();
        let split = SplitAudit {
            train_x: ids(&tr),
            test_x: ids(&te),
            ..SplitAudit::default()
        };
        let best = report.best_cell();
        let (lk, ll) = (best.level2_sq, best.level2_l_sq.unwrap_or(best.level2_sq));
        (gx.subset(&te)?, gy.subset(&te)?, lk, ll, Some(report), Some(split))
    } else {
        let lk = kernel::median_heuristic_level2(&[&gx])?;
        let ll = kernel::median_heuristic_level2(&[&gy])?;
        (gx, gy, lk, ll, None, None)
    };
    let paired = PairedGrams::from_embeddings(&test_x, &test_y, lk, ll, SecondLevel::Gaussian)?;
    let nulls = paired.null(config.n_permutations, util::derive_seed(seed, &["null"]))?;
    let params = SelectedParams {
        level2_sq: lk,
        level2_l_sq: Some(ll),
        ..SelectedParams::default()
    };
    let mut result = TestResult::from_null(paired.observed(), &nulls, config.alpha, params, seed, config.retain_null)?;
    result.split = split;
    Ok(Outcome { result, tuning: report })
}

/// Correlation of per-series grid means; there is nothing to tune, so all
/// pairs enter the test.
pub fn run_pcc(sample: &PairedSample, grid_size: usize, config: &TestConfig) -> Result<Outcome> {
    let summary = |sets: &[ObservationSet]| -> Result<Vec<f64>> {
        Ok(grids_of(sets, grid_size)?.iter().map(GridSeries::mean).collect())
    };
    let (x, y) = (summary(sample.x_sets())?, summary(sample.y_sets())?);
    let mut result = pcc_with_null(
        &x,
        &y,
        config.n_permutations,
        config.alpha,
        util::derive_seed(config.seed, &["null"]),
        config.retain_null,
    )?;
    result.seed = config.seed;
    Ok(Outcome { result, tuning: None })
}
