//! Permutation nulls, p-values, and test decisions.
//!
//! Every null replicate `b` draws from its own counter-based stream keyed by
//! `(seed, b)`, so the null vector is identical whether replicates run in
//! parallel or sequentially.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, GramMatrix, SecondLevel};
use crate::rff::EmbeddedSample;
use crate::stats;
use crate::util::{self, par_map};

/// Null values within this distance of the observed statistic count as ties.
///
/// Statistics are O(1) in magnitude (Gram entries are at most one and weights
/// sum to one), and replicates that are algebraically equal to the observed
/// value can differ from it by a few ulps of summation order.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Version tag of the serialized [`TestResult`].
pub const RESULT_SCHEMA: u32 = 1;

/// Bandwidths a test was run with.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SelectedParams {
    /// Level-1 lengthscale of the x side (and of both samples in a two-sample test).
    pub level1_sq: f64,
    /// Level-1 lengthscale of the y side, independence tests only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level1_y_sq: Option<f64>,
    /// Level-2 lengthscale (`K`).
    pub level2_sq: f64,
    /// Level-2 lengthscale of the `L` kernel, independence tests only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level2_l_sq: Option<f64>,
}

/// Which sets ended up in the tuning and testing parts.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SplitAudit {
    pub train_x: Vec<String>,
    pub test_x: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub train_y: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub test_y: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub schema: u32,
    pub statistic: f64,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub n_permutations: usize,
    pub selected_params: SelectedParams,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub basis_fingerprints: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitAudit>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null_stats: Option<Vec<f64>>,
}

impl TestResult {
    /// Assembles a result from an observed statistic and its null replicates.
    pub fn from_null(
        observed: f64,
        nulls: &[f64],
        alpha: f64,
        selected_params: SelectedParams,
        seed: u64,
        retain_null: bool,
    ) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        let p = p_value(observed, nulls)?;
        Ok(Self {
            schema: RESULT_SCHEMA,
            statistic: if observed.abs() < stats::ZERO_CLAMP { 0.0 } else { observed },
            p_value: p,
            reject: p <= alpha,
            alpha,
            n_permutations: nulls.len(),
            selected_params,
            seed,
            basis_fingerprints: Vec::new(),
            split: None,
            null_stats: retain_null.then(|| nulls.to_vec()),
        })
    }
}

/// Add-one permutation p-value `(1 + #{null >= observed}) / (B + 1)`.
pub fn p_value(observed: f64, nulls: &[f64]) -> Result<f64> {
    if nulls.is_empty() {
        return Err(Error::invalid("no null replicates"));
    }
    let exceed = nulls
        .iter()
        .filter(|&&v| v >= observed - TIE_TOLERANCE)
        .count();
    Ok((1 + exceed) as f64 / (nulls.len() + 1) as f64)
}

/// Pooled two-sample problem: one Gram matrix over all `N + M` embeddings.
///
/// A regrouping assigns every pooled row to one of the two groups; weights
/// travel with their rows and are renormalized within each group.
#[derive(Debug, Clone)]
pub struct PooledTwoSample {
    gram: GramMatrix,
    /// Pooled weights on a common scale: `w_i * N` for x rows, `v_j * M` for y rows.
    raw_weights: Vec<f64>,
    n_x: usize,
}

impl PooledTwoSample {
    pub fn new(
        emb_x: &EmbeddedSample,
        emb_y: &EmbeddedSample,
        lengthscale_sq: f64,
        kind: SecondLevel,
    ) -> Result<Self> {
        kernel::check_same_basis(emb_x, emb_y)?;
        let mut rows = emb_x.rows().to_vec();
        rows.extend_from_slice(emb_y.rows());
        let (n, m) = (emb_x.len(), emb_y.len());
        let mut raw: Vec<f64> = emb_x.weights().iter().map(|w| w * n as f64).collect();
        raw.extend(emb_y.weights().iter().map(|v| v * m as f64));
        let uniform = vec![1.0 / (n + m) as f64; n + m];
        let pooled = EmbeddedSample::new(rows, uniform, emb_x.basis_fingerprint())?;
        let gram = kernel::gram_with(&pooled, &pooled, lengthscale_sq, kind)?;
        Ok(Self {
            gram,
            raw_weights: raw,
            n_x: n,
        })
    }

    pub fn total(&self) -> usize {
        self.raw_weights.len()
    }

    /// Statistic when pooled rows `order[..N]` form the first group.
    pub fn statistic(&self, order: &[usize]) -> f64 {
        let (first, second) = order.split_at(self.n_x);
        let sum = |idx: &[usize]| idx.iter().map(|&i| self.raw_weights[i]).sum::<f64>();
        let (sx, sy) = (sum(first), sum(second));
        let mut c = vec![0.0; self.total()];
        for &i in first {
            c[i] = self.raw_weights[i] / sx;
        }
        for &i in second {
            c[i] = -self.raw_weights[i] / sy;
        }
        // (a - b)^T G (a - b) = a^T G a + b^T G b - 2 a^T G b.
        self.gram.bilinear(&c, &c)
    }

    /// Statistic under the original grouping.
    pub fn observed(&self) -> f64 {
        let order: Vec<usize> = (0..self.total()).collect();
        self.statistic(&order)
    }

    pub fn null(&self, n_permutations: usize, seed: u64) -> Result<Vec<f64>> {
        if n_permutations == 0 {
            return Err(Error::invalid("need at least one permutation"));
        }
        Ok(par_map(n_permutations, |b| {
            let mut rng = util::replicate_rng(seed, b as u64);
            let mut order: Vec<usize> = (0..self.total()).collect();
            order.shuffle(&mut rng);
            self.statistic(&order)
        }))
    }
}

/// Null distribution of the weighted MMD statistic under random regrouping.
pub fn two_sample_null(
    emb_x: &EmbeddedSample,
    emb_y: &EmbeddedSample,
    lengthscale_sq: f64,
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    PooledTwoSample::new(emb_x, emb_y, lengthscale_sq, SecondLevel::Gaussian)?
        .null(n_permutations, seed)
}

/// Paired problem with the x side double-centered once; the y side is
/// permuted against it.
#[derive(Debug, Clone)]
pub struct PairedGrams {
    centered_k: Vec<f64>,
    l: GramMatrix,
}

impl PairedGrams {
    pub fn new(k: GramMatrix, l: GramMatrix) -> Result<Self> {
        let n = k.rows();
        if k.cols() != n || l.rows() != n || l.cols() != n {
            return Err(Error::size("paired Gram matrices must be square and of one size"));
        }
        let centered_k = stats::double_center(&stats::weighted_gram(&k), n);
        Ok(Self { centered_k, l })
    }

    pub fn from_embeddings(
        emb_x: &EmbeddedSample,
        emb_y: &EmbeddedSample,
        lengthscale_k: f64,
        lengthscale_l: f64,
        kind: SecondLevel,
    ) -> Result<Self> {
        if emb_x.len() != emb_y.len() {
            return Err(Error::size(format!(
                "independence test needs paired samples, got {} and {} sets",
                emb_x.len(),
                emb_y.len()
            )));
        }
        let k = kernel::gram_with(emb_x, emb_x, lengthscale_k, kind)?;
        let l = kernel::gram_with(emb_y, emb_y, lengthscale_l, kind)?;
        Self::new(k, l)
    }

    pub fn len(&self) -> usize {
        self.l.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Statistic with y row `perm[i]` paired to x row `i`.
    pub fn statistic(&self, perm: &[usize]) -> f64 {
        let n = self.len();
        let v = self.l.row_weights();
        let mut total = 0.0;
        for i in 0..n {
            let pi = perm[i];
            let a_row = &self.centered_k[i * n..(i + 1) * n];
            let mut acc = 0.0;
            for (j, &a) in a_row.iter().enumerate() {
                let pj = perm[j];
                acc += a * v[pj] * self.l.get(pi, pj);
            }
            total += v[pi] * acc;
        }
        (n * n) as f64 * total
    }

    pub fn observed(&self) -> f64 {
        let id: Vec<usize> = (0..self.len()).collect();
        self.statistic(&id)
    }

    pub fn null(&self, n_permutations: usize, seed: u64) -> Result<Vec<f64>> {
        if n_permutations == 0 {
            return Err(Error::invalid("need at least one permutation"));
        }
        Ok(par_map(n_permutations, |b| {
            let mut rng = util::replicate_rng(seed, b as u64);
            let mut perm: Vec<usize> = (0..self.len()).collect();
            perm.shuffle(&mut rng);
            self.statistic(&perm)
        }))
    }
}

/// Null distribution of RHSIC with the y rows (and their weights) re-paired.
pub fn independence_null(
    emb_x: &EmbeddedSample,
    emb_y: &EmbeddedSample,
    lengthscale_k: f64,
    lengthscale_l: f64,
    n_permutations: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    PairedGrams::from_embeddings(emb_x, emb_y, lengthscale_k, lengthscale_l, SecondLevel::Gaussian)?
        .null(n_permutations, seed)
}
