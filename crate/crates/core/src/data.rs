//! Set-valued data: observation sets, weighted samples, and JSONL ingestion.
//!
//! Every example is a bag of `d`-dimensional points. A [`Sample`] is a
//! collection of such bags with one nonnegative weight per bag; by default the
//! weight of a bag is proportional to its size, so better-estimated embeddings
//! count for more in the test statistics.
//!
//! File format, one JSON object per line:
//!
//! ```text
//! {"id": "patient-1", "points": [[0.1, 2.3], [0.4, 2.0]], "weight": 0.5}
//! {"id": "patient-1", "x": [[0.1, 2.3]], "y": [[0.2, 7.0], [0.9, 6.5]]}
//! ```
//!
//! The first form is a two-sample file (`weight` optional), the second a
//! paired file (`weight_x` / `weight_y` optional).

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// One bag of points drawn from a latent distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationSet {
    id: String,
    points: Vec<Vec<f64>>,
}

impl ObservationSet {
    pub fn new(id: impl Into<String>, points: Vec<Vec<f64>>) -> Result<Self> {
        let id = id.into();
        let first = points.first().ok_or_else(|| Error::EmptySet(id.clone()))?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::invalid(format!("set `{id}` has zero-dimensional points")));
        }
        for (index, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    id,
                    index,
                    expected: dim,
                    found: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { id, index });
            }
        }
        Ok(Self { id, points })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points[0].len()
    }
}

/// `w_i = n_i / sum_j n_j`.
pub fn compute_weights(set_sizes: &[usize]) -> Result<Vec<f64>> {
    if set_sizes.is_empty() {
        return Err(Error::invalid("no set sizes given"));
    }
    if set_sizes.contains(&0) {
        return Err(Error::invalid("set sizes must be at least 1"));
    }
    let total: usize = set_sizes.iter().sum();
    Ok(set_sizes
        .iter()
        .map(|&n| n as f64 / total as f64)
        .collect())
}

pub fn uniform_weights(n: usize) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::invalid("cannot build weights for zero sets"));
    }
    Ok(vec![1.0 / n as f64; n])
}

/// Rescales nonnegative weights to sum to one.
pub fn normalize_weights(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("weights sum to zero"));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

fn check_weights(weights: &[f64], expected_len: usize) -> Result<()> {
    if weights.len() != expected_len {
        return Err(Error::size(format!(
            "{} weights for {} sets",
            weights.len(),
            expected_len
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("weights must be finite and nonnegative"));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::invalid(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

fn common_dim(sets: &[ObservationSet]) -> Result<usize> {
    let dim = sets[0].dim();
    for set in sets {
        if set.dim() != dim {
            return Err(Error::DimensionMismatch {
                id: set.id.clone(),
                index: 0,
                expected: dim,
                found: set.dim(),
            });
        }
    }
    Ok(dim)
}

/// Which weighting rule a test applies to its sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Weighting {
    /// `n_i / sum n_j`, or explicit weights when the input carries them.
    #[default]
    SetSize,
    Uniform,
}

/// A weighted collection of observation sets sharing one point dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    sets: Vec<ObservationSet>,
    weights: Vec<f64>,
}

impl Sample {
    /// Builds a sample weighted by set size.
    pub fn new(sets: Vec<ObservationSet>) -> Result<Self> {
        let sizes: Vec<usize> = sets.iter().map(ObservationSet::len).collect();
        if sets.len() < 2 {
            return Err(Error::invalid(format!(
                "a sample needs at least 2 sets, got {}",
                sets.len()
            )));
        }
        let weights = compute_weights(&sizes)?;
        Self::with_weights(sets, weights)
    }

    pub fn with_weights(sets: Vec<ObservationSet>, weights: Vec<f64>) -> Result<Self> {
        if sets.len() < 2 {
            return Err(Error::invalid(format!(
                "a sample needs at least 2 sets, got {}",
                sets.len()
            )));
        }
        common_dim(&sets)?;
        check_weights(&weights, sets.len())?;
        Ok(Self { sets, weights })
    }

    pub fn sets(&self) -> &[ObservationSet] {
        &self.sets
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }

    pub fn set_sizes(&self) -> Vec<usize> {
        self.sets.iter().map(ObservationSet::len).collect()
    }

    pub fn ids(&self) -> Vec<String> {
        self.sets.iter().map(|s| s.id.clone()).collect()
    }

    /// Same sets, weights replaced according to `weighting`.
    pub fn reweighted(&self, weighting: Weighting) -> Self {
        match weighting {
            Weighting::SetSize => self.clone(),
            Weighting::Uniform => Self {
                sets: self.sets.clone(),
                weights: vec![1.0 / self.len() as f64; self.len()],
            },
        }
    }

    /// The sets at `indices`, with their weights renormalized to sum to one.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let sets = indices.iter().map(|&i| self.sets[i].clone()).collect();
        let raw: Vec<f64> = indices.iter().map(|&i| self.weights[i]).collect();
        Self::with_weights(sets, normalize_weights(&raw)?)
    }
}

/// Aligned pairs of observation sets for independence testing.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSample {
    ids: Vec<String>,
    x: Vec<ObservationSet>,
    y: Vec<ObservationSet>,
    weights_x: Vec<f64>,
    weights_y: Vec<f64>,
}

impl PairedSample {
    /// Pairs weighted by set size, independently per side.
    pub fn new(ids: Vec<String>, x: Vec<ObservationSet>, y: Vec<ObservationSet>) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::size(format!(
                "{} x-sets but {} y-sets",
                x.len(),
                y.len()
            )));
        }
        if x.is_empty() {
            return Err(Error::invalid("a paired sample needs at least 2 pairs"));
        }
        let wx = compute_weights(&x.iter().map(ObservationSet::len).collect::<Vec<_>>())?;
        let wy = compute_weights(&y.iter().map(ObservationSet::len).collect::<Vec<_>>())?;
        Self::with_weights(ids, x, y, wx, wy)
    }

    pub fn with_weights(
        ids: Vec<String>,
        x: Vec<ObservationSet>,
        y: Vec<ObservationSet>,
        weights_x: Vec<f64>,
        weights_y: Vec<f64>,
    ) -> Result<Self> {
        if x.len() != y.len() || ids.len() != x.len() {
            return Err(Error::size(format!(
                "{} ids, {} x-sets, {} y-sets",
                ids.len(),
                x.len(),
                y.len()
            )));
        }
        if x.len() < 2 {
            return Err(Error::invalid(format!(
                "a paired sample needs at least 2 pairs, got {}",
                x.len()
            )));
        }
        common_dim(&x)?;
        common_dim(&y)?;
        check_weights(&weights_x, x.len())?;
        check_weights(&weights_y, y.len())?;
        Ok(Self {
            ids,
            x,
            y,
            weights_x,
            weights_y,
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn x_sets(&self) -> &[ObservationSet] {
        &self.x
    }

    pub fn y_sets(&self) -> &[ObservationSet] {
        &self.y
    }

    pub fn weights_x(&self) -> &[f64] {
        &self.weights_x
    }

    pub fn weights_y(&self) -> &[f64] {
        &self.weights_y
    }

    /// The x side as a standalone sample.
    pub fn x_sample(&self) -> Sample {
        Sample {
            sets: self.x.clone(),
            weights: self.weights_x.clone(),
        }
    }

    pub fn y_sample(&self) -> Sample {
        Sample {
            sets: self.y.clone(),
            weights: self.weights_y.clone(),
        }
    }

    pub fn reweighted(&self, weighting: Weighting) -> Self {
        match weighting {
            Weighting::SetSize => self.clone(),
            Weighting::Uniform => {
                let w = vec![1.0 / self.len() as f64; self.len()];
                Self {
                    weights_x: w.clone(),
                    weights_y: w,
                    ..self.clone()
                }
            }
        }
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let pick = |v: &[ObservationSet]| indices.iter().map(|&i| v[i].clone()).collect();
        let wx: Vec<f64> = indices.iter().map(|&i| self.weights_x[i]).collect();
        let wy: Vec<f64> = indices.iter().map(|&i| self.weights_y[i]).collect();
        Self::with_weights(
            indices.iter().map(|&i| self.ids[i].clone()).collect(),
            pick(&self.x),
            pick(&self.y),
            normalize_weights(&wx)?,
            normalize_weights(&wy)?,
        )
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SetRecord {
    id: String,
    points: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairRecord {
    id: String,
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_x: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weight_y: Option<f64>,
}

/// Expected layout of a JSONL input file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Schema {
    TwoSample,
    Paired,
}

/// Result of [`load_sample`].
#[derive(Debug, Clone)]
pub enum Loaded {
    Sample(Sample),
    Paired(PairedSample),
}

fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<(usize, T)>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        out.push((line_no, record));
    }
    Ok(out)
}

fn at_line(path: &Path, line: usize, err: Error) -> Error {
    match err {
        Error::Parse { .. } | Error::Io { .. } => err,
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: other.to_string(),
        },
    }
}

/// Resolves weights that may be given per record: all or none.
fn resolve_weights(path: &Path, given: &[Option<f64>], sizes: &[usize]) -> Result<Vec<f64>> {
    let present = given.iter().filter(|w| w.is_some()).count();
    if present == 0 {
        return compute_weights(sizes);
    }
    if present != given.len() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: given.iter().position(Option::is_none).map_or(0, |i| i + 1),
            message: "weights must be given on every line or on none".into(),
        });
    }
    let raw: Vec<f64> = given.iter().map(|w| w.unwrap_or(0.0)).collect();
    normalize_weights(&raw)
}

pub fn load_sample(path: impl AsRef<Path>, schema: Schema) -> Result<Loaded> {
    let path = path.as_ref();
    match schema {
        Schema::TwoSample => load_two_sample(path).map(Loaded::Sample),
        Schema::Paired => load_paired(path).map(Loaded::Paired),
    }
}

pub fn load_two_sample(path: impl AsRef<Path>) -> Result<Sample> {
    let path = path.as_ref();
    let records: Vec<(usize, SetRecord)> = read_records(path)?;
    let mut sets = Vec::with_capacity(records.len());
    let mut given = Vec::with_capacity(records.len());
    let mut dim = None;
    for (line, rec) in records {
        let set = ObservationSet::new(rec.id, rec.points).map_err(|e| at_line(path, line, e))?;
        let d = *dim.get_or_insert(set.dim());
        if set.dim() != d {
            let err = Error::DimensionMismatch {
                id: set.id.clone(),
                index: 0,
                expected: d,
                found: set.dim(),
            };
            return Err(at_line(path, line, err));
        }
        given.push(rec.weight);
        sets.push(set);
    }
    let sizes: Vec<usize> = sets.iter().map(ObservationSet::len).collect();
    let weights = resolve_weights(path, &given, &sizes)?;
    Sample::with_weights(sets, weights).map_err(|e| at_line(path, 0, e))
}

pub fn load_paired(path: impl AsRef<Path>) -> Result<PairedSample> {
    let path = path.as_ref();
    let records: Vec<(usize, PairRecord)> = read_records(path)?;
    let mut ids = Vec::new();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut gx = Vec::new();
    let mut gy = Vec::new();
    for (line, rec) in records {
        let x = ObservationSet::new(format!("{}/x", rec.id), rec.x)
            .map_err(|e| at_line(path, line, e))?;
        let y = ObservationSet::new(format!("{}/y", rec.id), rec.y)
            .map_err(|e| at_line(path, line, e))?;
        if let Some(first) = xs.first().map(ObservationSet::dim) {
            if x.dim() != first {
                let err = Error::DimensionMismatch {
                    id: x.id.clone(),
                    index: 0,
                    expected: first,
                    found: x.dim(),
                };
                return Err(at_line(path, line, err));
            }
        }
        if let Some(first) = ys.first().map(ObservationSet::dim) {
            if y.dim() != first {
                let err = Error::DimensionMismatch {
                    id: y.id.clone(),
                    index: 0,
                    expected: first,
                    found: y.dim(),
                };
                return Err(at_line(path, line, err));
            }
        }
        ids.push(rec.id);
        xs.push(x);
        ys.push(y);
        gx.push(rec.weight_x);
        gy.push(rec.weight_y);
    }
    let wx = resolve_weights(path, &gx, &xs.iter().map(ObservationSet::len).collect::<Vec<_>>())?;
    let wy = resolve_weights(path, &gy, &ys.iter().map(ObservationSet::len).collect::<Vec<_>>())?;
    PairedSample::with_weights(ids, xs, ys, wx, wy).map_err(|e| at_line(path, 0, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn write_line<W: Write, T: Serialize>(out: &mut W, path: &Path, record: &T) -> Result<()> {
    let line = serde_json::to_string(record).map_err(|e| Error::invalid(e.to_string()))?;
    writeln!(out, "{line}").map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a two-sample JSONL file. Weights are written only when asked for.
pub fn save_sample(path: impl AsRef<Path>, sample: &Sample, include_weights: bool) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for (set, &w) in sample.sets.iter().zip(&sample.weights) {
        let rec = SetRecord {
            id: set.id.clone(),
            points: set.points.clone(),
            weight: include_weights.then_some(w),
        };
        write_line(&mut out, path, &rec)?;
    }
    out.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn save_paired(path: impl AsRef<Path>, sample: &PairedSample, include_weights: bool) -> Result<()> {
    let path = path.as_ref();
    let mut out = create(path)?;
    for i in 0..sample.len() {
        let rec = PairRecord {
            id: sample.ids[i].clone(),
            x: sample.x[i].points.clone(),
            y: sample.y[i].points.clone(),
            weight_x: include_weights.then_some(sample.weights_x[i]),
            weight_y: include_weights.then_some(sample.weights_y[i]),
        };
        write_line(&mut out, path, &rec)?;
    }
    out.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}
