//! Rejection-rate sweeps over synthetic designs.
//!
//! Each trial draws fresh data from seeds derived from `(seed, sweep value,
//! trial)`, so every method in a cell sees the same data, and runs the full
//! split/tune/test pipeline. Failed trials are counted, never dropped silently.

use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::baselines::{self, DEFAULT_GRID_SIZE};
use crate::data::{Sample, Weighting};
use crate::error::{Error, Result};
use crate::pipeline::{self, Outcome, TestConfig};
use crate::synthetic::{self, IndependenceDesign, Link, SetSizes, TwoSampleDesign, DEFAULT_INVGAMMA_SHAPE};
use crate::tuning::ParamGrid;
use crate::util::{self, par_map};

pub const CSV_HEADER: [&str; 7] = [
    "method",
    "sweep_param",
    "sweep_value",
    "rejection_rate",
    "standard_error",
    "trials",
    "wall_time_seconds",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Problem {
    TwoSample,
    Independence,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Rmmd,
    RmmdUnweighted,
    FixedMmd,
    Rhsic,
    RhsicUnweighted,
    FixedHsic,
    Pcc,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Rmmd,
        Method::RmmdUnweighted,
        Method::FixedMmd,
        Method::Rhsic,
        Method::RhsicUnweighted,
        Method::FixedHsic,
        Method::Pcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Rmmd => "rmmd",
            Method::RmmdUnweighted => "rmmd_unweighted",
            Method::FixedMmd => "fixed_mmd",
            Method::Rhsic => "rhsic",
            Method::RhsicUnweighted => "rhsic_unweighted",
            Method::FixedHsic => "fixed_hsic",
            Method::Pcc => "pcc",
        }
    }

    pub fn problem(self) -> Problem {
        match self {
            Method::Rmmd | Method::RmmdUnweighted | Method::FixedMmd => Problem::TwoSample,
            _ => Problem::Independence,
        }
    }

    pub fn valid_names() -> String {
        Method::ALL.map(Method::name).join(", ")
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`; valid methods: {}", Method::valid_names())))
    }
}

/// Design parameter varied across a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    /// Second sample's amplitude minus the first's.
    AmplitudeDifference,
    /// Extra baseline noise variance of the second sample.
    VarianceDifference,
    /// Observation noise of the independence design.
    Noise,
    /// Value channels per series.
    Dims,
    /// Sets per sample (pairs for independence).
    NSets,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::AmplitudeDifference => "amplitude_difference",
            SweepParam::VarianceDifference => "variance_difference",
            SweepParam::Noise => "noise",
            SweepParam::Dims => "dims",
            SweepParam::NSets => "n_sets",
        }
    }

    fn applies_to(self, problem: Problem) -> bool {
        match self {
            SweepParam::AmplitudeDifference | SweepParam::VarianceDifference => problem == Problem::TwoSample,
            SweepParam::Noise => problem == Problem::Independence,
            SweepParam::Dims | SweepParam::NSets => true,
        }
    }
}

fn default_trials() -> usize {
    200
}
fn default_n_sets() -> usize {
    100
}
fn default_alpha() -> f64 {
    pipeline::DEFAULT_ALPHA
}
fn default_permutations() -> usize {
    200
}
fn default_features() -> usize {
    pipeline::DEFAULT_FEATURES
}
fn default_inner() -> usize {
    pipeline::DEFAULT_INNER_PERMUTATIONS
}
fn default_eta() -> f64 {
    1.0
}
fn default_sigma() -> f64 {
    0.1
}
fn default_shape() -> f64 {
    DEFAULT_INVGAMMA_SHAPE
}
fn default_noise() -> f64 {
    0.2
}
fn default_one() -> usize {
    1
}
fn default_grid_size() -> usize {
    DEFAULT_GRID_SIZE
}
fn yes() -> bool {
    true
}

/// A sweep: one design parameter over a list of values, several methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub problem: Problem,
    pub sweep_param: SweepParam,
    pub sweep_values: Vec<f64>,
    pub methods: Vec<Method>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default = "default_n_sets")]
    pub n_sets: usize,
    #[serde(default)]
    pub set_sizes: SetSizes,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_permutations")]
    pub n_permutations: usize,
    #[serde(default = "default_features")]
    pub n_features: usize,
    #[serde(default = "default_inner")]
    pub inner_permutations: usize,
    #[serde(default)]
    pub grid: Option<ParamGrid>,
    #[serde(default = "yes")]
    pub tune: bool,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    /// Amplitude of the first sample.
    #[serde(default = "default_eta")]
    pub eta: f64,
    #[serde(default)]
    pub amplitude_difference: f64,
    #[serde(default = "default_sigma")]
    pub sigma: f64,
    #[serde(default)]
    pub variance_difference: f64,
    #[serde(default = "default_shape")]
    pub invgamma_shape: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Fixed link; drawn uniformly per trial when absent.
    #[serde(default)]
    pub link: Option<Link>,
    /// `false` severs the pairing (independence null).
    #[serde(default = "yes")]
    pub dependent: bool,
    #[serde(default)]
    pub shared_times: bool,
    #[serde(default = "default_one")]
    pub dims: usize,
    #[serde(default)]
    pub seed: u64,
    /// Record wall-clock time per cell; off by default so output is reproducible.
    #[serde(default)]
    pub record_timing: bool,
}

impl BenchmarkSpec {
    pub fn new(problem: Problem, sweep_param: SweepParam, sweep_values: Vec<f64>, methods: Vec<Method>) -> Self {
        Self {
            problem,
            sweep_param,
            sweep_values,
            methods,
            trials: default_trials(),
            n_sets: default_n_sets(),
            set_sizes: SetSizes::default(),
            alpha: default_alpha(),
            n_permutations: default_permutations(),
            n_features: default_features(),
            inner_permutations: default_inner(),
            grid: None,
            tune: true,
            grid_size: DEFAULT_GRID_SIZE,
            eta: default_eta(),
            amplitude_difference: 0.0,
            sigma: default_sigma(),
            variance_difference: 0.0,
            invgamma_shape: default_shape(),
            noise: default_noise(),
            link: None,
            dependent: true,
            shared_times: false,
            dims: 1,
            seed: 0,
            record_timing: false,
        }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(s).map_err(|e| Error::invalid(format!("benchmark spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::invalid("sweep values must be nonempty"));
        }
        if self.methods.is_empty() {
            return Err(Error::invalid("no methods given"));
        }
        if let Some(m) = self.methods.iter().find(|m| m.problem() != self.problem) {
            return Err(Error::invalid(format!(
                "method `{}` does not apply to a {:?} problem",
                m.name(),
                self.problem
            )));
        }
        if !self.sweep_param.applies_to(self.problem) {
            return Err(Error::invalid(format!(
                "sweep parameter `{}` does not apply to a {:?} problem",
                self.sweep_param.name(),
                self.problem
            )));
        }
        if matches!(self.sweep_param, SweepParam::Dims | SweepParam::NSets)
            && self.sweep_values.iter().any(|v| !(v.fract() == 0.0 && *v >= 1.0))
        {
            return Err(Error::invalid("dims and n_sets sweeps take positive integers"));
        }
        if self.sweep_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sweep values must be finite"));
        }
        self.config(0).validate()
    }

    fn config(&self, seed: u64) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            n_permutations: self.n_permutations,
            n_features: self.n_features,
            grid: self.grid.clone().unwrap_or_default(),
            weighting: Weighting::SetSize,
            tune: self.tune,
            inner_permutations: self.inner_permutations,
            seed,
            ..TestConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkRow {
    pub method: String,
    pub sweep_param: String,
    pub sweep_value: f64,
    pub rejection_rate: f64,
    pub standard_error: f64,
    /// Completed trials; the denominator of the rate.
    pub trials: usize,
    /// Trials that raised an error and were excluded.
    #[serde(default)]
    pub failures: usize,
    pub wall_time_seconds: f64,
}

enum TrialData {
    TwoSample(Sample, Sample),
    Paired(crate::data::PairedSample),
}

fn generate(spec: &BenchmarkSpec, value: f64, seed: u64) -> Result<TrialData> {
    let mut n_sets = spec.n_sets;
    let mut dims = spec.dims;
    let mut amp_diff = spec.amplitude_difference;
    let mut var_diff = spec.variance_difference;
    let mut noise = spec.noise;
    match spec.sweep_param {
        SweepParam::AmplitudeDifference => amp_diff = value,
        SweepParam::VarianceDifference => var_diff = value,
        SweepParam::Noise => noise = value,
        SweepParam::Dims => dims = value as usize,
        SweepParam::NSets => n_sets = value as usize,
    }
    match spec.problem {
        Problem::TwoSample => {
            let design = |eta: f64, sigma: f64, label: &str| TwoSampleDesign {
                eta,
                sigma,
                invgamma_shape: spec.invgamma_shape,
                n_sets,
                set_sizes: spec.set_sizes.clone(),
                dims,
                seed: util::derive_seed(seed, &[label]),
            };
            let x = synthetic::gen_two_sample(&design(spec.eta, spec.sigma, "x"))?;
            let y = synthetic::gen_two_sample(&design(spec.eta + amp_diff, spec.sigma + var_diff, "y"))?;
            Ok(TrialData::TwoSample(x, y))
        }
        Problem::Independence => {
            let link = match spec.link {
                Some(l) => l,
                None => {
                    let mut rng = util::rng_from_seed(util::derive_seed(seed, &["link"]));
                    Link::ALL[rng.random_range(0..Link::ALL.len())]
                }
            };
            let design = IndependenceDesign {
                noise,
                link,
                n_pairs: n_sets,
                set_sizes: spec.set_sizes.clone(),
                dims,
                shared_times: spec.shared_times,
                seed: util::derive_seed(seed, &["pairs"]),
            };
            Ok(TrialData::Paired(synthetic::gen_independence(&design, spec.dependent)?))
        }
    }
}

fn run_method(method: Method, data: &TrialData, spec: &BenchmarkSpec, seed: u64) -> Result<Outcome> {
    let mut config = spec.config(seed);
    match (method, data) {
        (Method::Rmmd, TrialData::TwoSample(x, y)) => pipeline::run_two_sample(x, y, &config),
        (Method::RmmdUnweighted, TrialData::TwoSample(x, y)) => {
            config.weighting = Weighting::Uniform;
            pipeline::run_two_sample(x, y, &config)
        }
        (Method::FixedMmd, TrialData::TwoSample(x, y)) => baselines::run_fixed_two_sample(x, y, spec.grid_size, &config),
        (Method::Rhsic, TrialData::Paired(p)) => pipeline::run_independence(p, &config),
        (Method::RhsicUnweighted, TrialData::Paired(p)) => {
            config.weighting = Weighting::Uniform;
            pipeline::run_independence(p, &config)
        }
        (Method::FixedHsic, TrialData::Paired(p)) => baselines::run_fixed_independence(p, spec.grid_size, &config),
        (Method::Pcc, TrialData::Paired(p)) => baselines::run_pcc(p, spec.grid_size, &config),
        _ => Err(Error::invalid(format!("method `{}` does not match the problem", method.name()))),
    }
}

/// Outcome of one trial for one method: rejection decision and elapsed seconds.
type TrialOutcome = (Result<bool>, f64);

fn value_label(value: f64) -> String {
    format!("{:016x}", value.to_bits())
}

/// Runs every `(method, sweep value)` cell; rows are ordered by method (as
/// listed in the spec), then sweep value. `progress` sees each row as its
/// sweep value completes.
pub fn run_benchmark_with_progress(
    spec: &BenchmarkSpec,
    mut progress: impl FnMut(&BenchmarkRow, &[String]),
) -> Result<Vec<BenchmarkRow>> {
    spec.validate()?;
    let mut by_value: Vec<Vec<BenchmarkRow>> = Vec::with_capacity(spec.sweep_values.len());
    for &value in &spec.sweep_values {
        let label = value_label(value);
        let trials: Vec<Vec<TrialOutcome>> = par_map(spec.trials, |t| {
            let data_seed = util::derive_seed_indexed(util::derive_seed(spec.seed, &["data", &label]), "trial", t as u64);
            let data = generate(spec, value, data_seed);
            spec.methods
                .iter()
                .map(|&method| {
                    let start = Instant::now();
                    let test_seed = util::derive_seed_indexed(
                        util::derive_seed(spec.seed, &["test", method.name(), &label]),
                        "trial",
                        t as u64,
                    );
                    let decision = match &data {
                        Ok(d) => run_method(method, d, spec, test_seed).map(|o| o.result.reject),
                        Err(e) => Err(Error::invalid(format!("data generation failed: {e}"))),
                    };
                    (decision, start.elapsed().as_secs_f64())
                })
                .collect()
        });
        let mut rows = Vec::with_capacity(spec.methods.len());
        for (k, method) in spec.methods.iter().enumerate() {
            let mut rejections = 0usize;
            let mut completed = 0usize;
            let mut errors = Vec::new();
            let mut seconds = 0.0;
            for (t, outcomes) in trials.iter().enumerate() {
                let (decision, elapsed) = &outcomes[k];
                seconds += elapsed;
                match decision {
                    Ok(r) => {
                        completed += 1;
                        rejections += usize::from(*r);
                    }
                    Err(e) => errors.push(format!("trial {t}: {e}")),
                }
            }
            let rate = if completed == 0 { 0.0 } else { rejections as f64 / completed as f64 };
            let se = if completed == 0 { 0.0 } else { (rate * (1.0 - rate) / completed as f64).sqrt() };
            let row = BenchmarkRow {
                method: method.name().to_string(),
                sweep_param: spec.sweep_param.name().to_string(),
                sweep_value: value,
                rejection_rate: rate,
                standard_error: se,
                trials: completed,
                failures: errors.len(),
                wall_time_seconds: if spec.record_timing { seconds } else { 0.0 },
            };
            progress(&row, &errors);
            rows.push(row);
        }
        by_value.push(rows);
    }
    let mut out = Vec::with_capacity(spec.methods.len() * spec.sweep_values.len());
    for k in 0..spec.methods.len() {
        out.extend(by_value.iter().map(|rows| rows[k].clone()));
    }
    Ok(out)
}

pub fn run_benchmark(spec: &BenchmarkSpec) -> Result<Vec<BenchmarkRow>> {
    run_benchmark_with_progress(spec, |_, _| {})
}

fn io_error(path: &Path, e: impl Into<std::io::Error>) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source: e.into(),
    }
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line() as usize);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => io_error(path, io),
        other => Error::Parse {
            path: path.to_path_buf(),
            line,
            message: format!("{other:?}"),
        },
    }
}

pub fn write_csv(rows: &[BenchmarkRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(CSV_HEADER).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.sweep_param.clone(),
            r.sweep_value.to_string(),
            r.rejection_rate.to_string(),
            r.standard_error.to_string(),
            r.trials.to_string(),
            r.wall_time_seconds.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Reads a file written by [`write_csv`]; failure counts are not stored there
/// and come back as zero.
pub fn read_csv(path: impl AsRef<Path>) -> Result<Vec<BenchmarkRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn write_json(rows: &[BenchmarkRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(rows).expect("rows serialize");
    std::fs::write(path, text + "\n").map_err(|e| io_error(path, e))
}
