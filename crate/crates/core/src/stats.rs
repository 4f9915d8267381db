//! Weighted two-sample (RMMD²) and independence (RHSIC) statistics on set
//! embeddings, plus brute-force reference evaluations used for verification.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{self, GramMatrix, SecondLevel};
use crate::rff::EmbeddedSample;
use crate::util;

/// Below this magnitude a squared distance is reported as zero.
pub const ZERO_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StatisticKind {
    Rmmd2,
    Rhsic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatisticValue {
    /// Unclamped value; this is what permutation ranks compare.
    pub value: f64,
    pub kind: StatisticKind,
    pub n_x: usize,
    pub n_y: usize,
}

impl StatisticValue {
    /// Value for display: tiny magnitudes from rounding are shown as zero.
    pub fn reported(&self) -> f64 {
        if self.value.abs() < ZERO_CLAMP {
            0.0
        } else {
            self.value
        }
    }
}

/// `w^T Kxx w + v^T Kyy v - 2 w^T Kxy v` from precomputed blocks.
pub fn rmmd2_from_grams(kxx: &GramMatrix, kyy: &GramMatrix, kxy: &GramMatrix) -> f64 {
    let w = kxx.row_weights();
    let v = kyy.row_weights();
    kxx.bilinear(w, w) + kyy.bilinear(v, v) - 2.0 * kxy.bilinear(w, v)
}

/// Weighted squared MMD between two embedded samples.
pub fn rmmd2_with(
    emb_x: &EmbeddedSample,
    emb_y: &EmbeddedSample,
    lengthscale_sq: f64,
    kind: SecondLevel,
) -> Result<StatisticValue> {
    kernel::check_same_basis(emb_x, emb_y)?;
    let kxx = kernel::gram_with(emb_x, emb_x, lengthscale_sq, kind)?;
    let kyy = kernel::gram_with(emb_y, emb_y, lengthscale_sq, kind)?;
    let kxy = kernel::gram_with(emb_x, emb_y, lengthscale_sq, kind)?;
    Ok(StatisticValue {
        value: rmmd2_from_grams(&kxx, &kyy, &kxy),
        kind: StatisticKind::Rmmd2,
        n_x: emb_x.len(),
        n_y: emb_y.len(),
    })
}

pub fn rmmd2(emb_x: &EmbeddedSample, emb_y: &EmbeddedSample, lengthscale_sq: f64) -> Result<StatisticValue> {
    rmmd2_with(emb_x, emb_y, lengthscale_sq, SecondLevel::Gaussian)
}

/// `H A H` for a square row-major matrix, `H = I - 11^T / n`.
pub(crate) fn double_center(a: &[f64], n: usize) -> Vec<f64> {
    let inv = 1.0 / n as f64;
    let row_means: Vec<f64> = a.chunks(n).map(|r| r.iter().sum::<f64>() * inv).collect();
    let col_means: Vec<f64> = (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j]).sum::<f64>() * inv)
        .collect();
    let grand = row_means.iter().sum::<f64>() * inv;
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] = a[i * n + j] - row_means[i] - col_means[j] + grand;
        }
    }
    out
}

/// `(w w^T) ∘ G` for a square Gram matrix.
pub(crate) fn weighted_gram(g: &GramMatrix) -> Vec<f64> {
    let n = g.rows();
    let w = g.row_weights();
    let mut out = g.values().to_vec();
    for i in 0..n {
        for j in 0..n {
            out[i * n + j] *= w[i] * w[j];
        }
    }
    out
}

/// `N^2 Tr(K̂ H L̂ H)` from square Gram matrices with their weights attached.
pub fn rhsic_from_grams(k: &GramMatrix, l: &GramMatrix) -> Result<f64> {
    let n = k.rows();
    if k.cols() != n || l.rows() != n || l.cols() != n {
        return Err(Error::size(format!(
            "HSIC needs two square matrices of one size, got {}x{} and {}x{}",
            k.rows(),
            k.cols(),
            l.rows(),
            l.cols()
        )));
    }
    let centered = double_center(&weighted_gram(k), n);
    let l_hat = weighted_gram(l);
    // Tr(A B) = sum_ij A_ij B_ji, and L̂ is symmetric.
    let trace = util::dot(&centered, &l_hat);
    let nn = (n * n) as f64;
    Ok(nn * trace)
}

pub fn rhsic_with(
    emb_x: &EmbeddedSample,
    emb_y: &EmbeddedSample,
    lengthscale_k: f64,
    lengthscale_l: f64,
    kind: SecondLevel,
) -> Result<StatisticValue> {
    if emb_x.len() != emb_y.len() {
        return Err(Error::size(format!(
            "independence test needs paired samples, got {} and {} sets",
            emb_x.len(),
            emb_y.len()
        )));
    }
    let k = kernel::gram_with(emb_x, emb_x, lengthscale_k, kind)?;
    let l = kernel::gram_with(emb_y, emb_y, lengthscale_l, kind)?;
    Ok(StatisticValue {
        value: rhsic_from_grams(&k, &l)?,
        kind: StatisticKind::Rhsic,
        n_x: emb_x.len(),
        n_y: emb_y.len(),
    })
}

pub fn rhsic(
    emb_x: &EmbeddedSample,
    emb_y: &EmbeddedSample,
    lengthscale_k: f64,
    lengthscale_l: f64,
) -> Result<StatisticValue> {
    rhsic_with(emb_x, emb_y, lengthscale_k, lengthscale_l, SecondLevel::Gaussian)
}

fn check_square(m: &[Vec<f64>], n: usize) -> Result<()> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::size(format!("expected a {n}x{n} matrix")));
    }
    Ok(())
}

/// HSIC as an explicit sum of V-statistics:
/// `1/N² Σ K_ij L_ij + 1/N⁴ Σ K_ij L_qr − 2/N³ Σ K_ij L_iq`.
pub fn vstat_hsic_oracle(k: &[Vec<f64>], l: &[Vec<f64>]) -> Result<f64> {
    let n = k.len();
    if n == 0 {
        return Err(Error::invalid("empty matrices"));
    }
    check_square(k, n)?;
    check_square(l, n)?;
    let nf = n as f64;
    let mut first = 0.0;
    let mut second = 0.0;
    let mut third = 0.0;
    for i in 0..n {
        for j in 0..n {
            first += k[i][j] * l[i][j];
            for q in 0..n {
                third += k[i][j] * l[i][q];
                for r in 0..n {
                    second += k[i][j] * l[q][r];
                }
            }
        }
    }
    Ok(first / nf.powi(2) + second / nf.powi(4) - 2.0 * third / nf.powi(3))
}

/// Exact MMD² (V-statistic, uniform weights) between single points under the
/// composed kernel, with the level-1 Gaussian kernel evaluated in closed form:
/// `|mu_x - mu_y|^2 = 2 - 2 k(x, y)`.
pub fn composed_mmd_oracle(
    points_x: &[Vec<f64>],
    points_y: &[Vec<f64>],
    level1_sq: f64,
    level2_sq: f64,
) -> Result<f64> {
    if points_x.is_empty() || points_y.is_empty() {
        return Err(Error::invalid("both samples need at least one point"));
    }
    if !(level1_sq > 0.0 && level2_sq > 0.0) {
        return Err(Error::invalid("bandwidths must be positive"));
    }
    let composed = |a: &[f64], b: &[f64]| {
        let k = (-util::squared_distance(a, b) / (2.0 * level1_sq)).exp();
        (-(2.0 - 2.0 * k) / (2.0 * level2_sq)).exp()
    };
    let mean = |xs: &[Vec<f64>], ys: &[Vec<f64>]| {
        let mut s = 0.0;
        for a in xs {
            for b in ys {
                s += composed(a, b);
            }
        }
        s / (xs.len() * ys.len()) as f64
    };
    Ok(mean(points_x, points_x) + mean(points_y, points_y) - 2.0 * mean(points_x, points_y))
}

/// [`composed_mmd_oracle`] taking observation sets, which must be singletons.
pub fn composed_mmd_oracle_sets(
    x: &[crate::data::ObservationSet],
    y: &[crate::data::ObservationSet],
    level1_sq: f64,
    level2_sq: f64,
) -> Result<f64> {
    let single = |sets: &[crate::data::ObservationSet]| -> Result<Vec<Vec<f64>>> {
        sets.iter()
            .map(|s| {
                if s.len() == 1 {
                    Ok(s.points()[0].clone())
                } else {
                    Err(Error::invalid(format!("set `{}` is not a singleton", s.id())))
                }
            })
            .collect()
    };
    composed_mmd_oracle(&single(x)?, &single(y)?, level1_sq, level2_sq)
}
