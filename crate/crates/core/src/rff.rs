//! Random Fourier features for the Gaussian kernel on observations, and the
//! finite-dimensional mean embeddings of sets built from them.
//!
//! With `omega_j ~ N(0, I / lengthscale_sq)` and `b_j ~ U[0, 2pi)`, the map
//! `phi(x)_j = sqrt(2/m) cos(<omega_j, x> + b_j)` satisfies
//! `E <phi(x), phi(y)> = exp(-|x - y|^2 / (2 lengthscale_sq))`.
//! A set is embedded as the average of `phi` over its points.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{ObservationSet, Sample};
use crate::error::{Error, Result};
use crate::util::{self, par_map};

/// Pair-count cap for the level-1 median heuristic.
pub const DEFAULT_MAX_PAIRS: usize = 1_000_000;

/// Frequencies and phases defining one feature map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RffBasis {
    /// Row-major `m x d`.
    omegas: Vec<f64>,
    phases: Vec<f64>,
    n_features: usize,
    dim: usize,
    lengthscale_sq: f64,
    seed: u64,
}

impl RffBasis {
    /// Draws a basis for `m` features on `d`-dimensional inputs.
    ///
    /// The frequencies are standard normal draws scaled by
    /// `1 / sqrt(lengthscale_sq)`, so two bases with the same seed and
    /// different bandwidths share their underlying draws.
    pub fn sample(m: usize, d: usize, lengthscale_sq: f64, seed: u64) -> Result<Self> {
        if m == 0 || d == 0 {
            return Err(Error::invalid("feature count and dimension must be positive"));
        }
        if !(lengthscale_sq > 0.0 && lengthscale_sq.is_finite()) {
            return Err(Error::invalid(format!(
                "level-1 lengthscale must be positive, got {lengthscale_sq}"
            )));
        }
        let mut rng = util::rng_from_seed(seed);
        let scale = lengthscale_sq.sqrt().recip();
        let omegas = (0..m * d)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        let phases = (0..m)
            .map(|_| {
                // random_range over [0, 2pi) can round up to 2pi; wrap it.
                let b = rng.random_range(0.0..2.0 * PI);
                if b >= 2.0 * PI {
                    0.0
                } else {
                    b
                }
            })
            .collect();
        Ok(Self {
            omegas,
            phases,
            n_features: m,
            dim: d,
            lengthscale_sq,
            seed,
        })
    }

    /// Builds a basis from explicit parameters. Mostly useful in tests.
    pub fn from_parts(
        omegas: Vec<Vec<f64>>,
        phases: Vec<f64>,
        lengthscale_sq: f64,
        seed: u64,
    ) -> Result<Self> {
        let m = omegas.len();
        if m == 0 || phases.len() != m {
            return Err(Error::size("need one phase per frequency row"));
        }
        let d = omegas[0].len();
        if d == 0 || omegas.iter().any(|r| r.len() != d) {
            return Err(Error::size("frequency rows must share one positive dimension"));
        }
        if phases.iter().any(|b| !(0.0..2.0 * PI).contains(b)) {
            return Err(Error::invalid("phases must lie in [0, 2pi)"));
        }
        if !(lengthscale_sq > 0.0) {
            return Err(Error::invalid("level-1 lengthscale must be positive"));
        }
        Ok(Self {
            omegas: omegas.into_iter().flatten().collect(),
            phases,
            n_features: m,
            dim: d,
            lengthscale_sq,
            seed,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lengthscale_sq(&self) -> f64 {
        self.lengthscale_sq
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn phases(&self) -> &[f64] {
        &self.phases
    }

    pub fn omega(&self, j: usize) -> &[f64] {
        &self.omegas[j * self.dim..(j + 1) * self.dim]
    }

    /// 64-bit hash of `(seed, m, d, lengthscale_sq)`.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(b"rff");
        h.update(self.seed.to_le_bytes());
        h.update((self.n_features as u64).to_le_bytes());
        h.update((self.dim as u64).to_le_bytes());
        h.update(self.lengthscale_sq.to_bits().to_le_bytes());
        let digest = h.finalize();
        let mut b = [0u8; 8];
        b.copy_from_slice(&digest[..8]);
        u64::from_le_bytes(b)
    }

    /// Writes `phi(x)` into `out`, which must have length `m`.
    fn map_into(&self, x: &[f64], out: &mut [f64]) {
        let norm = (2.0 / self.n_features as f64).sqrt();
        for (j, slot) in out.iter_mut().enumerate() {
            let arg = util::dot(self.omega(j), x) + self.phases[j];
            *slot = norm * arg.cos();
        }
    }

    pub fn feature_map(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim {
            return Err(Error::size(format!(
                "point has dimension {}, basis expects {}",
                x.len(),
                self.dim
            )));
        }
        let mut out = vec![0.0; self.n_features];
        self.map_into(x, &mut out);
        Ok(out)
    }

    /// Average feature map over the set's points.
    pub fn mean_embed(&self, set: &ObservationSet) -> Result<Vec<f64>> {
        if set.is_empty() {
            return Err(Error::EmptySet(set.id().to_string()));
        }
        if set.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                id: set.id().to_string(),
                index: 0,
                expected: self.dim,
                found: set.dim(),
            });
        }
        let mut acc = vec![0.0; self.n_features];
        let mut phi = vec![0.0; self.n_features];
        for p in set.points() {
            self.map_into(p, &mut phi);
            for (a, v) in acc.iter_mut().zip(&phi) {
                *a += v;
            }
        }
        let inv = 1.0 / set.len() as f64;
        acc.iter_mut().for_each(|a| *a *= inv);
        Ok(acc)
    }

    pub fn embed_sample(&self, sample: &Sample) -> Result<EmbeddedSample> {
        let rows: Result<Vec<_>> = par_map(sample.len(), |i| self.mean_embed(&sample.sets()[i]))
            .into_iter()
            .collect();
        EmbeddedSample::new(rows?, sample.weights().to_vec(), self.fingerprint())
    }
}

/// Convenience free-function forms.
pub fn sample_basis(m: usize, d: usize, lengthscale_sq: f64, seed: u64) -> Result<RffBasis> {
    RffBasis::sample(m, d, lengthscale_sq, seed)
}

pub fn feature_map(x: &[f64], basis: &RffBasis) -> Result<Vec<f64>> {
    basis.feature_map(x)
}

pub fn mean_embed(set: &ObservationSet, basis: &RffBasis) -> Result<Vec<f64>> {
    basis.mean_embed(set)
}

pub fn embed_sample(sample: &Sample, basis: &RffBasis) -> Result<EmbeddedSample> {
    basis.embed_sample(sample)
}

/// Mean embeddings of `N` sets (one row each) plus their weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddedSample {
    embeddings: Vec<Vec<f64>>,
    weights: Vec<f64>,
    basis_fingerprint: u64,
}

impl EmbeddedSample {
    /// Wraps precomputed rows. Rows need not come from a random feature
    /// basis; any vectors compared under one fingerprint are accepted.
    pub fn new(embeddings: Vec<Vec<f64>>, weights: Vec<f64>, basis_fingerprint: u64) -> Result<Self> {
        if embeddings.is_empty() {
            return Err(Error::invalid("no embeddings"));
        }
        if weights.len() != embeddings.len() {
            return Err(Error::size(format!(
                "{} weights for {} embeddings",
                weights.len(),
                embeddings.len()
            )));
        }
        let m = embeddings[0].len();
        if m == 0 || embeddings.iter().any(|r| r.len() != m) {
            return Err(Error::size("embedding rows must share one positive length"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self {
            embeddings,
            weights,
            basis_fingerprint,
        })
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.embeddings
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.embeddings[i]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn width(&self) -> usize {
        self.embeddings[0].len()
    }

    pub fn basis_fingerprint(&self) -> u64 {
        self.basis_fingerprint
    }

    /// Same rows with uniform weights.
    pub fn with_uniform_weights(&self) -> Self {
        let n = self.len();
        Self {
            embeddings: self.embeddings.clone(),
            weights: vec![1.0 / n as f64; n],
            basis_fingerprint: self.basis_fingerprint,
        }
    }

    /// Rows at `indices` with renormalized weights.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let rows = indices.iter().map(|&i| self.embeddings[i].clone()).collect();
        let raw: Vec<f64> = indices.iter().map(|&i| self.weights[i]).collect();
        Self::new(
            rows,
            crate::data::normalize_weights(&raw)?,
            self.basis_fingerprint,
        )
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("embedded sample serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let raw: Self = serde_json::from_str(s).map_err(|e| Error::invalid(e.to_string()))?;
        Self::new(raw.embeddings, raw.weights, raw.basis_fingerprint)
    }
}

/// Median of squared pairwise distances, estimated from at most `max_pairs`
/// pairs. All pairs are used when they fit under the cap; otherwise pairs
/// are drawn uniformly (with replacement) using `seed`.
pub(crate) fn median_sq_distance(points: &[&[f64]], max_pairs: usize, seed: u64) -> Result<f64> {
    let n = points.len();
    if n < 2 {
        return Err(Error::invalid(format!(
            "median heuristic needs at least 2 points, got {n}"
        )));
    }
    let total_pairs = n * (n - 1) / 2;
    let mut d2 = if total_pairs <= max_pairs.max(1) {
        let mut v = Vec::with_capacity(total_pairs);
        for i in 0..n {
            for j in i + 1..n {
                v.push(util::squared_distance(points[i], points[j]));
            }
        }
        v
    } else {
        let mut rng = util::rng_from_seed(seed);
        (0..max_pairs)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                util::squared_distance(points[i], points[j])
            })
            .collect()
    };
    let med = util::median(&mut d2);
    if !(med > 0.0) {
        return Err(Error::DegenerateScale(
            "median squared pairwise distance is zero".into(),
        ));
    }
    Ok(med)
}

/// Level-1 bandwidth: half the median squared distance between pooled points.
pub fn median_heuristic_level1(samples: &[&Sample], max_pairs: usize, seed: u64) -> Result<f64> {
    let points: Vec<&[f64]> = samples
        .iter()
        .flat_map(|s| s.sets().iter())
        .flat_map(|set| set.points().iter().map(Vec::as_slice))
        .collect();
    median_sq_distance(&points, max_pairs, seed).map(|m| m / 2.0)
}
