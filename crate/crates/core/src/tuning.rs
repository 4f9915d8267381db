//! Bandwidth selection by maximizing a test-power proxy on a training split.
//!
//! For the two-sample test the proxy is `RMMD² / (sigma_H1 + ridge)`, with
//! `sigma_H1` the second-order V-statistic standard deviation under the
//! alternative. For the independence test the denominator is the spread of a
//! small inner permutation null. Candidate bandwidths are multiples of the
//! median heuristics computed on the training part only.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{PairedSample, Sample};
use crate::error::{Error, Result};
use crate::kernel::{self, GramMatrix, SecondLevel};
use crate::permutation::PairedGrams;
use crate::rff::{self, EmbeddedSample, RffBasis};
use crate::stats;
use crate::util::{self, par_map};

pub const DEFAULT_MULTIPLIERS: [f64; 5] = [0.25, 0.5, 1.0, 2.0, 4.0];
pub const DEFAULT_RIDGE: f64 = 1e-8;
pub const DEFAULT_SPLIT: f64 = 0.5;
pub const MIN_INNER_PERMUTATIONS: usize = 20;

/// Candidate bandwidth multipliers and split settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGrid {
    pub level1_multipliers: Vec<f64>,
    pub level2_multipliers: Vec<f64>,
    pub split_fraction: f64,
    pub ridge: f64,
    /// Evaluate the criterion with the sample's own weights instead of uniform ones.
    #[serde(default)]
    pub weighted_criterion: bool,
}

impl Default for ParamGrid {
    fn default() -> Self {
        Self {
            level1_multipliers: DEFAULT_MULTIPLIERS.to_vec(),
            level2_multipliers: DEFAULT_MULTIPLIERS.to_vec(),
            split_fraction: DEFAULT_SPLIT,
            ridge: DEFAULT_RIDGE,
            weighted_criterion: false,
        }
    }
}

impl ParamGrid {
    /// A grid with a single cell at the median heuristics.
    pub fn median_only() -> Self {
        Self {
            level1_multipliers: vec![1.0],
            level2_multipliers: vec![1.0],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: &[f64]| !v.is_empty() && v.iter().all(|x| *x > 0.0 && x.is_finite());
        if !ok(&self.level1_multipliers) || !ok(&self.level2_multipliers) {
            return Err(Error::invalid("grid multipliers must be nonempty and positive"));
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return Err(Error::invalid(format!(
                "split fraction must lie in (0, 1), got {}",
                self.split_fraction
            )));
        }
        if !(self.ridge > 0.0) {
            return Err(Error::invalid("ridge must be positive"));
        }
        Ok(())
    }
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningCell {
    pub level1_multiplier: f64,
    pub level1_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level1_y_sq: Option<f64>,
    pub level2_multiplier: f64,
    pub level2_sq: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level2_l_multiplier: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level2_l_sq: Option<f64>,
    pub statistic: f64,
    /// Mean of the inner permutation null (independence tuning only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_mean: Option<f64>,
    pub spread: f64,
    /// `(statistic - null_mean) / (spread + ridge)`, with `null_mean` taken as
    /// zero for the two-sample criterion.
    pub criterion: f64,
}

impl TuningCell {
    fn distance_from_medians(&self) -> f64 {
        self.level1_multiplier.ln().abs()
            + self.level2_multiplier.ln().abs()
            + self.level2_l_multiplier.map_or(0.0, |m| m.ln().abs())
    }

    fn sort_key(&self) -> (f64, f64, f64) {
        (self.level1_sq, self.level2_sq, self.level2_l_sq.unwrap_or(0.0))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub cells: Vec<TuningCell>,
    pub best: usize,
    pub seed: u64,
}

impl TuningReport {
    pub fn best_cell(&self) -> &TuningCell {
        &self.cells[self.best]
    }

    pub(crate) fn from_cells(cells: Vec<TuningCell>, seed: u64) -> Result<Self> {
        let best = argmax(&cells).ok_or_else(|| {
            Error::DegenerateScale("no grid cell produced a usable criterion".into())
        })?;
        Ok(Self { cells, best, seed })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Highest criterion; ties go to the cell nearest the medians, then the
/// lexicographically smaller bandwidths.
fn argmax(cells: &[TuningCell]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, c) in cells.iter().enumerate() {
        if !c.criterion.is_finite() {
            continue;
        }
        let Some(b) = best else {
            best = Some(i);
            continue;
        };
        let cur = &cells[b];
        let better = if c.criterion != cur.criterion {
            c.criterion > cur.criterion
        } else {
            let (dc, db) = (c.distance_from_medians(), cur.distance_from_medians());
            if dc != db {
                dc < db
            } else {
                c.sort_key().partial_cmp(&cur.sort_key()) == Some(std::cmp::Ordering::Less)
            }
        };
        if better {
            best = Some(i);
        }
    }
    best
}

/// Shuffled index split; the first part has `round(n * fraction)` entries.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::invalid(format!("split fraction must lie in (0, 1), got {fraction}")));
    }
    let n_train = (n as f64 * fraction).round() as usize;
    if n_train < 2 || n - n_train < 2 {
        return Err(Error::invalid(format!(
            "splitting {n} sets at {fraction} leaves a part with fewer than 2 sets"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut util::rng_from_seed(seed));
    let test = idx.split_off(n_train);
    Ok((idx, test))
}

/// Disjoint set-level split; weights are renormalized within each part.
pub fn split_sample(sample: &Sample, fraction: f64, seed: u64) -> Result<(Sample, Sample)> {
    let (a, b) = split_indices(sample.len(), fraction, seed)?;
    Ok((sample.subset(&a)?, sample.subset(&b)?))
}

/// Pair-level split.
pub fn split_paired(sample: &PairedSample, fraction: f64, seed: u64) -> Result<(PairedSample, PairedSample)> {
    let (a, b) = split_indices(sample.len(), fraction, seed)?;
    Ok((sample.subset(&a)?, sample.subset(&b)?))
}

fn variance_from<F, G, H>(n: usize, kxx: F, kyy: G, kxy: H) -> f64
where
    F: Fn(usize, usize) -> f64,
    G: Fn(usize, usize) -> f64,
    H: Fn(usize, usize) -> f64,
{
    let nf = n as f64;
    let mut sum_sq_rows = 0.0;
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += kxx(i, j) + kyy(i, j) - kxy(i, j) - kxy(j, i);
        }
        sum_sq_rows += row * row;
        total += row;
    }
    let v = 4.0 / nf.powi(3) * sum_sq_rows - 4.0 / nf.powi(4) * total * total;
    v.max(0.0)
}

/// Second-order variance of the MMD V-statistic under the alternative,
/// `4/N³ Σ_i (Σ_j H_ij)² − 4/N⁴ (Σ_ij H_ij)²` with
/// `H_ij = Kxx_ij + Kyy_ij − Kxy_ij − Kxy_ji`, clamped at zero.
pub fn mmd_variance_h1(kxx: &[Vec<f64>], kyy: &[Vec<f64>], kxy: &[Vec<f64>]) -> Result<f64> {
    let n = kxx.len();
    let square = |m: &[Vec<f64>]| m.len() == n && m.iter().all(|r| r.len() == n);
    if n == 0 || !square(kxx) || !square(kyy) || !square(kxy) {
        return Err(Error::size("variance estimate needs three N x N blocks"));
    }
    Ok(variance_from(n, |i, j| kxx[i][j], |i, j| kyy[i][j], |i, j| kxy[i][j]))
}

fn variance_from_grams(kxx: &GramMatrix, kyy: &GramMatrix, kxy: &GramMatrix) -> f64 {
    variance_from(
        kxx.rows(),
        |i, j| kxx.get(i, j),
        |i, j| kyy.get(i, j),
        |i, j| kxy.get(i, j),
    )
}

/// Seed of the random feature basis shared by tuning and the final test.
pub fn basis_seed(master: u64, side: &str) -> u64 {
    util::derive_seed(master, &["basis", side])
}

/// Evaluates every level-2 multiplier for one pair of embedded samples.
///
/// Shared with the fixed-grid baseline, whose "embeddings" are grid vectors.
pub(crate) fn level2_cells_two_sample(
    ex: &EmbeddedSample,
    ey: &EmbeddedSample,
    multipliers: &[f64],
    ridge: f64,
    kind: SecondLevel,
    seed: u64,
) -> Result<Vec<(f64, f64, f64, f64, f64)>> {
    let med2 = kernel::median_heuristic_level2(&[ex, ey])?;
    // Align sizes for the variance estimate by subsampling the larger side.
    let n = ex.len().min(ey.len());
    let pick = |e: &EmbeddedSample, label: &str| -> Result<EmbeddedSample> {
        if e.len() == n {
            return Ok(e.with_uniform_weights());
        }
        let mut idx: Vec<usize> = (0..e.len()).collect();
        idx.shuffle(&mut util::rng_from_seed(util::derive_seed(seed, &["subsample", label])));
        idx.truncate(n);
        idx.sort_unstable();
        Ok(e.subset(&idx)?.with_uniform_weights())
    };
    let vx = pick(ex, "x")?;
    let vy = pick(ey, "y")?;
    multipliers
        .iter()
        .map(|&mult| {
            let ls = mult * med2;
            let stat = stats::rmmd2_with(ex, ey, ls, kind)?.value;
            let kxx = kernel::gram_with(&vx, &vx, ls, kind)?;
            let kyy = kernel::gram_with(&vy, &vy, ls, kind)?;
            let kxy = kernel::gram_with(&vx, &vy, ls, kind)?;
            let sd = variance_from_grams(&kxx, &kyy, &kxy).sqrt();
            Ok((mult, ls, stat, sd, stat / (sd + ridge)))
        })
        .collect()
}

/// Power-proxy search over `(level-1, level-2)` bandwidths for the two-sample test.
///
/// `seed` is the master seed of the run; the random feature basis is drawn
/// from [`basis_seed`] so the final test can rebuild it.
pub fn select_params_two_sample(
    train_x: &Sample,
    train_y: &Sample,
    grid: &ParamGrid,
    n_features: usize,
    seed: u64,
    kind: SecondLevel,
) -> Result<TuningReport> {
    grid.validate()?;
    if train_x.dim() != train_y.dim() {
        return Err(Error::size(format!(
            "samples have point dimensions {} and {}",
            train_x.dim(),
            train_y.dim()
        )));
    }
    let (tx, ty) = if grid.weighted_criterion {
        (train_x.clone(), train_y.clone())
    } else {
        (
            train_x.reweighted(crate::data::Weighting::Uniform),
            train_y.reweighted(crate::data::Weighting::Uniform),
        )
    };
    let med1 = rff::median_heuristic_level1(
        &[&tx, &ty],
        rff::DEFAULT_MAX_PAIRS,
        util::derive_seed(seed, &["median1"]),
    )?;
    let bseed = basis_seed(seed, "x");
    let per_level1: Vec<Result<Vec<TuningCell>>> = par_map(grid.level1_multipliers.len(), |a| {
        let m1 = grid.level1_multipliers[a];
        let ls1 = m1 * med1;
        let basis = RffBasis::sample(n_features, tx.dim(), ls1, bseed)?;
        let ex = basis.embed_sample(&tx)?;
        let ey = basis.embed_sample(&ty)?;
        let cells = match level2_cells_two_sample(&ex, &ey, &grid.level2_multipliers, grid.ridge, kind, seed) {
            Ok(c) => c,
            // A level-1 bandwidth that collapses every embedding is skipped.
            Err(e) if e.is_degenerate() => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        Ok(cells
            .into_iter()
            .map(|(m2, ls2, stat, sd, crit)| TuningCell {
                level1_multiplier: m1,
                level1_sq: ls1,
                level1_y_sq: None,
                level2_multiplier: m2,
                level2_sq: ls2,
                level2_l_multiplier: None,
                level2_l_sq: None,
                statistic: stat,
                null_mean: None,
                spread: sd,
                criterion: crit,
            })
            .collect())
    });
    let mut cells = Vec::new();
    for r in per_level1 {
        cells.extend(r?);
    }
    TuningReport::from_cells(cells, seed)
}

/// One `(K, L)` cell of the independence grid.
pub(crate) struct PairedCell {
    pub k_multiplier: f64,
    pub k_sq: f64,
    pub l_multiplier: f64,
    pub l_sq: f64,
    pub statistic: f64,
    pub null_mean: f64,
    pub null_sd: f64,
}

impl PairedCell {
    pub fn criterion(&self, ridge: f64) -> f64 {
        (self.statistic - self.null_mean) / (self.null_sd + ridge)
    }
}

/// Evaluates the `(K, L)` level-2 grid for one pair of embedded sides.
pub(crate) fn level2_cells_independence(
    ex: &EmbeddedSample,
    ey: &EmbeddedSample,
    multipliers: &[f64],
    kind: SecondLevel,
    inner_permutations: usize,
    seed: u64,
) -> Result<Vec<PairedCell>> {
    let med_k = kernel::median_heuristic_level2(&[ex])?;
    let med_l = kernel::median_heuristic_level2(&[ey])?;
    let ks: Vec<GramMatrix> = multipliers
        .iter()
        .map(|m| kernel::gram_with(ex, ex, m * med_k, kind))
        .collect::<Result<_>>()?;
    let ls: Vec<GramMatrix> = multipliers
        .iter()
        .map(|m| kernel::gram_with(ey, ey, m * med_l, kind))
        .collect::<Result<_>>()?;
    let inner_seed = util::derive_seed(seed, &["inner-null"]);
    let mut out = Vec::with_capacity(multipliers.len() * multipliers.len());
    for (a, k) in ks.iter().enumerate() {
        for (b, l) in ls.iter().enumerate() {
            let paired = PairedGrams::new(k.clone(), l.clone())?;
            let null = paired.null(inner_permutations, inner_seed)?;
            let mean = null.iter().sum::<f64>() / null.len() as f64;
            let var = null.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (null.len() - 1).max(1) as f64;
            out.push(PairedCell {
                k_multiplier: multipliers[a],
                k_sq: multipliers[a] * med_k,
                l_multiplier: multipliers[b],
                l_sq: multipliers[b] * med_l,
                statistic: paired.observed(),
                null_mean: mean,
                null_sd: var.sqrt(),
            });
        }
    }
    Ok(out)
}

/// Power-proxy search over `(level-1, K, L)` bandwidths for the independence test.
///
/// One level-1 multiplier is shared by both sides; each side scales its own
/// median heuristic by it.
pub fn select_params_independence(
    train: &PairedSample,
    grid: &ParamGrid,
    n_features: usize,
    inner_permutations: usize,
    seed: u64,
    kind: SecondLevel,
) -> Result<TuningReport> {
    grid.validate()?;
    if inner_permutations < MIN_INNER_PERMUTATIONS {
        return Err(Error::invalid(format!(
            "need at least {MIN_INNER_PERMUTATIONS} inner permutations, got {inner_permutations}"
        )));
    }
    let train = if grid.weighted_criterion {
        train.clone()
    } else {
        train.reweighted(crate::data::Weighting::Uniform)
    };
    let (sx, sy) = (train.x_sample(), train.y_sample());
    let med_x = rff::median_heuristic_level1(&[&sx], rff::DEFAULT_MAX_PAIRS, util::derive_seed(seed, &["median1", "x"]))?;
    let med_y = rff::median_heuristic_level1(&[&sy], rff::DEFAULT_MAX_PAIRS, util::derive_seed(seed, &["median1", "y"]))?;
    let (seed_x, seed_y) = (basis_seed(seed, "x"), basis_seed(seed, "y"));
    let per_level1: Vec<Result<Vec<TuningCell>>> = par_map(grid.level1_multipliers.len(), |a| {
        let m1 = grid.level1_multipliers[a];
        let bx = RffBasis::sample(n_features, sx.dim(), m1 * med_x, seed_x)?;
        let by = RffBasis::sample(n_features, sy.dim(), m1 * med_y, seed_y)?;
        let ex = bx.embed_sample(&sx)?;
        let ey = by.embed_sample(&sy)?;
        let cells = match level2_cells_independence(
            &ex,
            &ey,
            &grid.level2_multipliers,
            kind,
            inner_permutations,
            seed,
        ) {
            Ok(c) => c,
            Err(e) if e.is_degenerate() => return Ok(Vec::new()),
            Err(e) => return Err(e),
        };
        Ok(cells
            .into_iter()
            .map(|c| TuningCell {
                level1_multiplier: m1,
                level1_sq: m1 * med_x,
                level1_y_sq: Some(m1 * med_y),
                level2_multiplier: c.k_multiplier,
                level2_sq: c.k_sq,
                level2_l_multiplier: Some(c.l_multiplier),
                level2_l_sq: Some(c.l_sq),
                statistic: c.statistic,
                null_mean: Some(c.null_mean),
                spread: c.null_sd,
                criterion: c.criterion(grid.ridge),
            })
            .collect())
    });
    let mut cells = Vec::new();
    for r in per_level1 {
        cells.extend(r?);
    }
    TuningReport::from_cells(cells, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::ObservationSet;
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_sample(seed: u64, n: usize, shift: f64) -> Sample {
        let mut rng = util::rng_from_seed(seed);
        let sets = (0..n)
            .map(|i| {
                let k = rng.random_range(3..8);
                let pts = (0..k)
                    .map(|_| vec![rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0) + shift])
                    .collect();
                ObservationSet::new(format!("s{i}"), pts).unwrap()
            })
            .collect();
        Sample::new(sets).unwrap()
    }

    fn cell(m1: f64, m2: f64, crit: f64) -> TuningCell {
        TuningCell {
            level1_multiplier: m1,
            level1_sq: m1,
            level1_y_sq: None,
            level2_multiplier: m2,
            level2_sq: m2,
            level2_l_multiplier: None,
            level2_l_sq: None,
            statistic: crit,
            null_mean: None,
            spread: 1.0,
            criterion: crit,
        }
    }

    #[test]
    fn split_examples() {
        let (a, b) = split_indices(10, 0.5, 3).unwrap();
        assert_eq!((a.len(), b.len()), (5, 5));
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(split_indices(10, 0.5, 3).unwrap(), (a, b));
        assert!(split_indices(3, 0.5, 0).is_err());
        assert!(split_indices(10, 1.0, 0).is_err());
    }

    #[test]
    fn split_sample_renormalizes() {
        let s = toy_sample(1, 12, 0.0);
        let (tr, te) = split_sample(&s, 0.5, 4).unwrap();
        assert!((tr.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((te.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let ids_tr = tr.ids();
        assert!(te.ids().iter().all(|id| !ids_tr.contains(id)));
    }

    #[test]
    fn variance_examples() {
        let block = vec![vec![0.3, 0.7, 0.1], vec![0.7, 0.2, 0.5], vec![0.1, 0.5, 0.9]];
        assert_eq!(mmd_variance_h1(&block, &block, &block).unwrap(), 0.0);
        let c = |v: f64| vec![vec![v; 4]; 4];
        assert!(mmd_variance_h1(&c(0.9), &c(0.8), &c(0.2)).unwrap().abs() < 1e-15);
        assert!(mmd_variance_h1(&c(0.9), &block, &c(0.2)).is_err());
    }

    #[test]
    fn variance_matches_double_loop() {
        let mut rng = util::rng_from_seed(8);
        let mut rand6 = || -> Vec<Vec<f64>> {
            (0..6).map(|_| (0..6).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
        };
        let (kxx, kyy, kxy) = (rand6(), rand6(), rand6());
        // Direct evaluation with an explicit H matrix.
        let n = 6.0f64;
        let h: Vec<Vec<f64>> = (0..6)
            .map(|i| (0..6).map(|j| kxx[i][j] + kyy[i][j] - kxy[i][j] - kxy[j][i]).collect())
            .collect();
        let mut a = 0.0;
        for i in 0..6 {
            let mut s = 0.0;
            for j in 0..6 {
                s += h[i][j];
            }
            a += s * s;
        }
        let mut t = 0.0;
        for row in &h {
            for v in row {
                t += v;
            }
        }
        let expected = (4.0 / n.powi(3) * a - 4.0 / n.powi(4) * t * t).max(0.0);
        assert!((mmd_variance_h1(&kxx, &kyy, &kxy).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn argmax_tie_break() {
        let cells = vec![cell(0.5, 1.0, 2.0), cell(1.0, 1.0, 2.0), cell(2.0, 1.0, 1.0)];
        assert_eq!(argmax(&cells), Some(1));
        let cells = vec![cell(2.0, 1.0, 2.0), cell(0.5, 1.0, 2.0)];
        assert_eq!(argmax(&cells), Some(1));
        let cells = vec![cell(1.0, 1.0, f64::NEG_INFINITY), cell(4.0, 4.0, 0.1)];
        assert_eq!(argmax(&cells), Some(1));
        assert_eq!(argmax(&[cell(1.0, 1.0, f64::NAN)]), None);
    }

    #[test]
    fn single_cell_grid_selected() {
        let x = toy_sample(2, 10, 0.0);
        let y = toy_sample(3, 10, 0.5);
        let report =
            select_params_two_sample(&x, &y, &ParamGrid::median_only(), 20, 5, SecondLevel::Gaussian).unwrap();
        assert_eq!(report.cells.len(), 1);
        assert_eq!(report.best, 0);
        let report2 =
            select_params_two_sample(&x, &y, &ParamGrid::median_only(), 20, 5, SecondLevel::Gaussian).unwrap();
        assert_eq!(report, report2);
    }

    #[test]
    fn reported_best_is_table_max() {
        let x = toy_sample(4, 12, 0.0);
        let y = toy_sample(5, 9, 0.7);
        let report = select_params_two_sample(&x, &y, &ParamGrid::default(), 20, 6, SecondLevel::Gaussian).unwrap();
        assert_eq!(report.cells.len(), 25);
        let max = report.cells.iter().map(|c| c.criterion).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.best_cell().criterion, max);
    }

    #[test]
    fn independence_tuning_deterministic() {
        let x = toy_sample(6, 10, 0.0);
        let y = toy_sample(7, 10, 0.0);
        let ids = (0..10).map(|i| format!("p{i}")).collect();
        let pairs = PairedSample::new(ids, x.sets().to_vec(), y.sets().to_vec()).unwrap();
        let grid = ParamGrid {
            level1_multipliers: vec![1.0, 2.0],
            level2_multipliers: vec![0.5, 1.0],
            ..ParamGrid::default()
        };
        let a = select_params_independence(&pairs, &grid, 16, 20, 9, SecondLevel::Gaussian).unwrap();
        let b = select_params_independence(&pairs, &grid, 16, 20, 9, SecondLevel::Gaussian).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 8);
        let one = select_params_independence(&pairs, &ParamGrid::median_only(), 16, 20, 9, SecondLevel::Gaussian)
            .unwrap();
        assert_eq!(one.best, 0);
        assert!(select_params_independence(&pairs, &grid, 16, 10, 9, SecondLevel::Gaussian).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn variance_permutation_invariant(seed in any::<u64>(), n in 2usize..8) {
            let mut rng = util::rng_from_seed(seed);
            let mut rand_block = || -> Vec<Vec<f64>> {
                (0..n).map(|_| (0..n).map(|_| rng.random_range(0.0..1.0)).collect()).collect()
            };
            let (kxx, kyy, kxy) = (rand_block(), rand_block(), rand_block());
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let apply = |m: &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
                (0..n).map(|i| (0..n).map(|j| m[perm[i]][perm[j]]).collect()).collect()
            };
            let a = mmd_variance_h1(&kxx, &kyy, &kxy).unwrap();
            let b = mmd_variance_h1(&apply(&kxx), &apply(&kyy), &apply(&kxy)).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
