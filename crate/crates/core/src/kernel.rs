//! Second-level kernel on mean embeddings and Gram matrix assembly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rff::{self, EmbeddedSample};
use crate::util::{self, par_map};

/// Kernel applied between set embeddings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SecondLevel {
    /// `exp(-|u - v|^2 / (2 lengthscale_sq))`.
    #[default]
    Gaussian,
    /// Plain inner product `<u, v>`; the lengthscale is ignored.
    Linear,
}

impl SecondLevel {
    pub fn eval(self, u: &[f64], v: &[f64], lengthscale_sq: f64) -> f64 {
        match self {
            SecondLevel::Gaussian => (-util::squared_distance(u, v) / (2.0 * lengthscale_sq)).exp(),
            SecondLevel::Linear => util::dot(u, v),
        }
    }
}

pub fn gaussian_k(u: &[f64], v: &[f64], lengthscale_sq: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::size(format!(
            "embedding lengths differ ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    if !(lengthscale_sq > 0.0) {
        return Err(Error::invalid(format!(
            "level-2 lengthscale must be positive, got {lengthscale_sq}"
        )));
    }
    Ok(SecondLevel::Gaussian.eval(u, v, lengthscale_sq))
}

/// Dense `rows x cols` kernel matrix with the weights of both sides attached.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
    row_weights: Vec<f64>,
    col_weights: Vec<f64>,
    lengthscale_sq: f64,
}

impl GramMatrix {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    pub fn col_weights(&self) -> &[f64] {
        &self.col_weights
    }

    pub fn lengthscale_sq(&self) -> f64 {
        self.lengthscale_sq
    }

    /// `a^T G b`.
    pub fn bilinear(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        let mut total = 0.0;
        for (i, &ai) in a.iter().enumerate() {
            if ai == 0.0 {
                continue;
            }
            let row = &self.values[i * self.cols..(i + 1) * self.cols];
            total += ai * util::dot(row, b);
        }
        total
    }

    /// Row-major nested copy.
    pub fn to_nested(&self) -> Vec<Vec<f64>> {
        self.values.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }
}

fn check_lengthscale(kind: SecondLevel, lengthscale_sq: f64) -> Result<()> {
    if kind == SecondLevel::Gaussian && !(lengthscale_sq > 0.0 && lengthscale_sq.is_finite()) {
        return Err(Error::invalid(format!(
            "level-2 lengthscale must be positive, got {lengthscale_sq}"
        )));
    }
    Ok(())
}

pub(crate) fn check_same_basis(a: &EmbeddedSample, b: &EmbeddedSample) -> Result<()> {
    if a.basis_fingerprint() != b.basis_fingerprint() {
        return Err(Error::BasisMismatch {
            left: a.basis_fingerprint(),
            right: b.basis_fingerprint(),
        });
    }
    Ok(())
}

/// Kernel matrix between the rows of `a` and `b` under `kind`.
pub fn gram_with(
    a: &EmbeddedSample,
    b: &EmbeddedSample,
    lengthscale_sq: f64,
    kind: SecondLevel,
) -> Result<GramMatrix> {
    check_same_basis(a, b)?;
    check_lengthscale(kind, lengthscale_sq)?;
    let cols = b.len();
    let rows: Vec<Vec<f64>> = par_map(a.len(), |i| {
        (0..cols)
            .map(|j| kind.eval(a.row(i), b.row(j), lengthscale_sq))
            .collect()
    });
    Ok(GramMatrix {
        values: rows.into_iter().flatten().collect(),
        rows: a.len(),
        cols,
        row_weights: a.weights().to_vec(),
        col_weights: b.weights().to_vec(),
        lengthscale_sq,
    })
}

/// Gaussian second-level Gram matrix.
pub fn gram(a: &EmbeddedSample, b: &EmbeddedSample, lengthscale_sq: f64) -> Result<GramMatrix> {
    gram_with(a, b, lengthscale_sq, SecondLevel::Gaussian)
}

/// Level-2 bandwidth: half the median squared distance between all embedding
/// rows pooled across `samples`.
pub fn median_heuristic_level2(samples: &[&EmbeddedSample]) -> Result<f64> {
    if let Some(first) = samples.first() {
        for s in &samples[1..] {
            check_same_basis(first, s)?;
        }
    }
    let rows: Vec<&[f64]> = samples
        .iter()
        .flat_map(|s| s.rows().iter().map(Vec::as_slice))
        .collect();
    rff::median_sq_distance(&rows, rff::DEFAULT_MAX_PAIRS, 0).map(|m| m / 2.0)
}
