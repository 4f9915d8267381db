//! Browser bindings for the demo page. Every export returns a JSON string.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use setkernel::synthetic::{self, TwoSampleDesign};
use setkernel::{kernel, run_two_sample, RffBasis, Sample, TestConfig, Weighting};
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct SetView {
    times: Vec<f64>,
    values: Vec<f64>,
}

#[derive(Serialize)]
struct Draw {
    x: Vec<SetView>,
    y: Vec<SetView>,
}

#[derive(Serialize)]
struct TestView {
    statistic: f64,
    p_value: f64,
    reject: bool,
    level1_sq: f64,
    level2_sq: f64,
    null_stats: Vec<f64>,
}

#[derive(Serialize)]
struct ErrorPoint {
    m: usize,
    mean_abs_error: f64,
}

fn samples(eta_x: f64, eta_y: f64, sigma: f64, n: usize, seed: u64) -> setkernel::Result<(Sample, Sample)> {
    let x = synthetic::gen_two_sample(&TwoSampleDesign::new(eta_x, sigma, n, 2 * seed))?;
    let y = synthetic::gen_two_sample(&TwoSampleDesign::new(eta_y, sigma, n, 2 * seed + 1))?;
    Ok((x, y))
}

fn view(sample: &Sample) -> Vec<SetView> {
    sample
        .sets()
        .iter()
        .map(|s| SetView {
            times: s.points().iter().map(|p| p[0]).collect(),
            values: s.points().iter().map(|p| p[1]).collect(),
        })
        .collect()
}

pub fn draw_json(eta_x: f64, eta_y: f64, sigma: f64, n: usize, seed: u64) -> Result<String, String> {
    let (x, y) = samples(eta_x, eta_y, sigma, n, seed).map_err(|e| e.to_string())?;
    let draw = Draw { x: view(&x), y: view(&y) };
    serde_json::to_string(&draw).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
pub fn test_json(
    eta_x: f64,
    eta_y: f64,
    sigma: f64,
    n: usize,
    permutations: usize,
    weighted: bool,
    seed: u64,
) -> Result<String, String> {
    let (x, y) = samples(eta_x, eta_y, sigma, n, seed).map_err(|e| e.to_string())?;
    let config = TestConfig {
        n_permutations: permutations,
        weighting: if weighted { Weighting::SetSize } else { Weighting::Uniform },
        retain_null: true,
        seed,
        ..TestConfig::default()
    };
    let r = run_two_sample(&x, &y, &config).map_err(|e| e.to_string())?.result;
    let out = TestView {
        statistic: r.statistic,
        p_value: r.p_value,
        reject: r.reject,
        level1_sq: r.selected_params.level1_sq,
        level2_sq: r.selected_params.level2_sq,
        null_stats: r.null_stats.unwrap_or_default(),
    };
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Mean absolute gap between the feature inner product and the exact kernel,
/// over random pairs of 2-d standard normal points and `reps` bases per `m`.
pub fn rff_error_json(ms: &[usize], lengthscale_sq: f64, reps: usize, seed: u64) -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut point = || -> Vec<f64> { (0..2).map(|_| rng.sample(StandardNormal)).collect() };
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..20).map(|_| (point(), point())).collect();
    let mut out = Vec::with_capacity(ms.len());
    for &m in ms {
        let mut total = 0.0;
        for rep in 0..reps {
            let basis = RffBasis::sample(m, 2, lengthscale_sq, seed ^ ((m as u64) << 20) ^ rep as u64)
                .map_err(|e| e.to_string())?;
            for (a, b) in &pairs {
                let fa = basis.feature_map(a).map_err(|e| e.to_string())?;
                let fb = basis.feature_map(b).map_err(|e| e.to_string())?;
                let approx: f64 = fa.iter().zip(&fb).map(|(u, v)| u * v).sum();
                let exact = kernel::gaussian_k(a, b, lengthscale_sq).map_err(|e| e.to_string())?;
                total += (approx - exact).abs();
            }
        }
        out.push(ErrorPoint {
            m,
            mean_abs_error: total / (reps * pairs.len()).max(1) as f64,
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

fn js(r: Result<String, String>) -> Result<String, JsError> {
    r.map_err(|e| JsError::new(&e))
}

/// Two synthetic samples of set-valued curves for plotting.
#[wasm_bindgen]
pub fn generate(eta_x: f64, eta_y: f64, sigma: f64, n: usize, seed: u64) -> Result<String, JsError> {
    js(draw_json(eta_x, eta_y, sigma, n, seed))
}

/// Tuned RMMD test on the same draw, with the permutation null retained.
#[wasm_bindgen]
pub fn rmmd_test(
    eta_x: f64,
    eta_y: f64,
    sigma: f64,
    n: usize,
    permutations: usize,
    weighted: bool,
    seed: u64,
) -> Result<String, JsError> {
    js(test_json(eta_x, eta_y, sigma, n, permutations, weighted, seed))
}

#[wasm_bindgen]
pub fn rff_error(ms: Vec<usize>, lengthscale_sq: f64, reps: usize, seed: u64) -> Result<String, JsError> {
    js(rff_error_json(&ms, lengthscale_sq, reps, seed))
}
