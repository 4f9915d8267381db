//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Run with `cargo test -p setkernel-cli --test acceptance` (a few minutes on one core).

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use setkernel::harness::{self, BenchmarkRow, BenchmarkSpec, Method, Problem, SweepParam};
use setkernel::synthetic::{self, Link, SetSizes, TwoSampleDesign};
use setkernel::{kernel, pipeline, rff, stats, ObservationSet, RffBasis, Sample, TestConfig};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gaussian_point(r: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| r.sample(StandardNormal)).collect()
}

fn spec(problem: Problem, param: SweepParam, values: Vec<f64>, methods: Vec<Method>, seed: u64) -> BenchmarkSpec {
    let mut s = BenchmarkSpec::new(problem, param, values, methods);
    s.trials = 200;
    s.n_sets = 100;
    s.n_permutations = 200;
    s.n_features = 50;
    s.alpha = 0.05;
    s.seed = seed;
    s
}

fn rows_of(spec: &BenchmarkSpec) -> Vec<BenchmarkRow> {
    let rows = harness::run_benchmark(spec).expect("benchmark runs");
    for r in &rows {
        assert_eq!(r.failures, 0, "{} at {} had failed trials", r.method, r.sweep_value);
    }
    rows
}

fn in_band(rate: f64) -> bool {
    (0.01..=0.10).contains(&rate)
}

/// `a` does not exceed `b` by more than two combined standard errors.
fn not_above(a: &BenchmarkRow, b: &BenchmarkRow) -> bool {
    a.rejection_rate <= b.rejection_rate + 2.0 * (a.standard_error.powi(2) + b.standard_error.powi(2)).sqrt()
}

fn rates(rows: &[BenchmarkRow]) -> String {
    rows.iter()
        .map(|r| format!("{}={:.3}", r.sweep_value, r.rejection_rate))
        .collect::<Vec<_>>()
        .join(" ")
}

fn type_one_two_sample() -> Verdict {
    let rows = rows_of(&spec(
        Problem::TwoSample,
        SweepParam::AmplitudeDifference,
        vec![0.0],
        vec![Method::Rmmd],
        101,
    ));
    let r = rows[0].rejection_rate;
    verdict(in_band(r), format!("rejection rate {r:.3}, band [0.01, 0.10]"))
}

fn type_one_independence() -> Verdict {
    let mut s = spec(Problem::Independence, SweepParam::Noise, vec![0.2], vec![Method::Rhsic], 102);
    s.dependent = false;
    let r = rows_of(&s)[0].rejection_rate;
    verdict(in_band(r), format!("rejection rate {r:.3}, band [0.01, 0.10]"))
}

fn power_two_sample() -> Verdict {
    let mut s = spec(
        Problem::TwoSample,
        SweepParam::AmplitudeDifference,
        vec![0.0, 0.25, 0.5],
        vec![Method::Rmmd],
        103,
    );
    s.sigma = 0.1;
    let rows = rows_of(&s);
    let monotone = rows.windows(2).all(|w| not_above(&w[0], &w[1]));
    let top = rows[2].rejection_rate;
    verdict(
        monotone && top >= 0.8,
        format!("rates {}; nondecreasing within 2 SE: {monotone}; power at 0.5 >= 0.8", rates(&rows)),
    )
}

fn power_independence() -> Verdict {
    let mut s = spec(
        Problem::Independence,
        SweepParam::Noise,
        vec![0.2, 0.6, 1.0],
        vec![Method::Rhsic],
        104,
    );
    s.link = Some(Link::Square);
    let rows = rows_of(&s);
    let monotone = rows.windows(2).all(|w| not_above(&w[1], &w[0]));
    let first = rows[0].rejection_rate;
    verdict(
        monotone && first >= 0.8,
        format!("rates {}; nonincreasing within 2 SE: {monotone}; power at 0.2 >= 0.8", rates(&rows)),
    )
}

/// Embedding of one set computed point by point from the basis frequencies.
fn loop_embedding(basis: &RffBasis, set: &ObservationSet) -> Vec<f64> {
    let m = basis.n_features();
    let scale = (2.0 / m as f64).sqrt();
    let mut mu = vec![0.0; m];
    for p in set.points() {
        for (j, slot) in mu.iter_mut().enumerate() {
            let w = basis.omega(j);
            let mut dot = 0.0;
            for k in 0..p.len() {
                dot += w[k] * p[k];
            }
            *slot += scale * (dot + basis.phases()[j]).cos();
        }
    }
    mu.iter().map(|v| v / set.len() as f64).collect()
}

fn loop_k(u: &[f64], v: &[f64], ls: f64) -> f64 {
    let mut d = 0.0;
    for k in 0..u.len() {
        d += (u[k] - v[k]) * (u[k] - v[k]);
    }
    (-d / (2.0 * ls)).exp()
}

fn random_sample(r: &mut ChaCha8Rng, n: usize, d: usize, shift: f64, max_size: usize) -> Sample {
    let sets = (0..n)
        .map(|i| {
            let k = r.random_range(1..=max_size);
            let pts = (0..k)
                .map(|_| gaussian_point(r, d).into_iter().map(|v| v + shift).collect())
                .collect();
            ObservationSet::new(format!("s{i}"), pts).unwrap()
        })
        .collect();
    Sample::new(sets).unwrap()
}

fn oracle_rmmd() -> Verdict {
    let mut r = rng(105);
    let mut worst: f64 = 0.0;
    for problem in 0..20u64 {
        let n = r.random_range(2..=20);
        let d = r.random_range(1..=4);
        let m = r.random_range(5..=60);
        let ls1 = r.random_range(0.3..3.0);
        let ls2 = r.random_range(0.05..2.0);
        let x = random_sample(&mut r, n, d, 0.0, 15);
        let y = random_sample(&mut r, n, d, 0.4, 15);
        let basis = RffBasis::sample(m, d, ls1, problem).unwrap();
        let got = stats::rmmd2(&basis.embed_sample(&x).unwrap(), &basis.embed_sample(&y).unwrap(), ls2)
            .unwrap()
            .value;
        let mx: Vec<Vec<f64>> = x.sets().iter().map(|s| loop_embedding(&basis, s)).collect();
        let my: Vec<Vec<f64>> = y.sets().iter().map(|s| loop_embedding(&basis, s)).collect();
        let (w, v) = (x.weights(), y.weights());
        let mut expected = 0.0;
        for i in 0..n {
            for j in 0..n {
                expected += w[i] * w[j] * loop_k(&mx[i], &mx[j], ls2);
                expected += v[i] * v[j] * loop_k(&my[i], &my[j], ls2);
                expected -= 2.0 * w[i] * v[j] * loop_k(&mx[i], &my[j], ls2);
            }
        }
        worst = worst.max((got - expected).abs());
    }

    // Singletons with many features approach the exact composed kernel.
    let singles = |r: &mut ChaCha8Rng, shift: f64| -> Vec<Vec<f64>> {
        (0..20)
            .map(|_| gaussian_point(r, 2).into_iter().map(|v| v + shift).collect())
            .collect()
    };
    let (px, py) = (singles(&mut r, 0.0), singles(&mut r, 0.7));
    let as_sample = |pts: &[Vec<f64>]| {
        Sample::new(
            pts.iter()
                .enumerate()
                .map(|(i, p)| ObservationSet::new(format!("p{i}"), vec![p.clone()]).unwrap())
                .collect(),
        )
        .unwrap()
    };
    let (ls1, ls2) = (1.0, 0.5);
    let basis = RffBasis::sample(5000, 2, ls1, 7).unwrap();
    let approx = stats::rmmd2(
        &basis.embed_sample(&as_sample(&px)).unwrap(),
        &basis.embed_sample(&as_sample(&py)).unwrap(),
        ls2,
    )
    .unwrap()
    .value;
    let composed = |a: &[f64], b: &[f64]| {
        let k = loop_k(a, b, ls1);
        (-(2.0 - 2.0 * k) / (2.0 * ls2)).exp()
    };
    let mean = |a: &[Vec<f64>], b: &[Vec<f64>]| {
        let mut s = 0.0;
        for u in a {
            for v in b {
                s += composed(u, v);
            }
        }
        s / (a.len() * b.len()) as f64
    };
    let exact = mean(&px, &px) + mean(&py, &py) - 2.0 * mean(&px, &py);
    let gap = (approx - exact).abs();
    verdict(
        worst <= 1e-12 && gap <= 0.01,
        format!("max loop deviation {worst:.2e} (<= 1e-12); composed-kernel gap {gap:.4} (<= 0.01, exact {exact:.4})"),
    )
}

fn oracle_rhsic() -> Verdict {
    let mut r = rng(106);
    let mut worst: f64 = 0.0;
    for problem in 0..20u64 {
        let n = r.random_range(2..=12);
        let rows = |r: &mut ChaCha8Rng, w: usize| -> Vec<Vec<f64>> { (0..n).map(|_| gaussian_point(r, w)).collect() };
        let fp = 1000 + problem;
        let uniform = vec![1.0 / n as f64; n];
        let ex = rff::EmbeddedSample::new(rows(&mut r, 5), uniform.clone(), fp).unwrap();
        let ey = rff::EmbeddedSample::new(rows(&mut r, 3), uniform, fp).unwrap();
        let (lk, ll) = (r.random_range(0.2..4.0), r.random_range(0.2..4.0));
        let got = stats::rhsic(&ex, &ey, lk, ll).unwrap().value;
        let gram = |e: &rff::EmbeddedSample, ls: f64| -> Vec<Vec<f64>> {
            (0..n).map(|i| (0..n).map(|j| loop_k(e.row(i), e.row(j), ls)).collect()).collect()
        };
        let (k, l) = (gram(&ex, lk), gram(&ey, ll));
        // Tr(KHLH) / N^2 with explicit matrices.
        let nf = n as f64;
        let h: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| f64::from(u8::from(i == j)) - 1.0 / nf).collect())
            .collect();
        let mul = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            (0..n)
                .map(|i| (0..n).map(|j| (0..n).map(|t| a[i][t] * b[t][j]).sum()).collect())
                .collect()
        };
        let prod = mul(&mul(&mul(&k, &h), &l), &h);
        let trace: f64 = (0..n).map(|i| prod[i][i]).sum::<f64>() / (nf * nf);
        // Sum of V-statistics.
        let mut first = 0.0;
        let mut ksum = 0.0;
        let mut lsum = 0.0;
        let mut third = 0.0;
        for i in 0..n {
            for j in 0..n {
                first += k[i][j] * l[i][j];
                ksum += k[i][j];
                lsum += l[i][j];
                for q in 0..n {
                    third += k[i][j] * l[i][q];
                }
            }
        }
        let vstat = first / nf.powi(2) + ksum * lsum / nf.powi(4) - 2.0 * third / nf.powi(3);
        worst = worst.max((got - trace).abs()).max((got - vstat).abs());
    }
    verdict(worst <= 1e-10, format!("max deviation from both oracles {worst:.2e} (<= 1e-10)"))
}

fn rff_convergence() -> Verdict {
    let mut r = rng(107);
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..30).map(|_| (gaussian_point(&mut r, 2), gaussian_point(&mut r, 2))).collect();
    let errors: Vec<f64> = [10usize, 100, 1000]
        .iter()
        .map(|&m| {
            let mut total = 0.0;
            for rep in 0..200u64 {
                let basis = RffBasis::sample(m, 2, 1.0, 10_000 * m as u64 + rep).unwrap();
                for (a, b) in &pairs {
                    let fa = basis.feature_map(a).unwrap();
                    let fb = basis.feature_map(b).unwrap();
                    let approx: f64 = fa.iter().zip(&fb).map(|(u, v)| u * v).sum();
                    total += (approx - kernel::gaussian_k(a, b, 1.0).unwrap()).abs();
                }
            }
            total / (200 * pairs.len()) as f64
        })
        .collect();
    let monotone = errors.windows(2).all(|w| w[1] < w[0]);
    verdict(
        monotone && errors[2] <= 0.05,
        format!(
            "mean |error| m=10: {:.4}, m=100: {:.4}, m=1000: {:.4} (decreasing, <= 0.05 at 1000)",
            errors[0], errors[1], errors[2]
        ),
    )
}

fn embedding_convergence() -> Verdict {
    let basis = RffBasis::sample(100, 2, 1.0, 108).unwrap();
    let mut r = rng(108);
    let mut draw = |n: usize| -> ObservationSet {
        ObservationSet::new("s", (0..n).map(|_| gaussian_point(&mut r, 2)).collect()).unwrap()
    };
    let ns = [10usize, 100, 1000];
    let mut medians = Vec::new();
    for &n in &ns {
        let mut dists: Vec<f64> = (0..100)
            .map(|_| {
                let small = basis.mean_embed(&draw(n)).unwrap();
                let reference = basis.mean_embed(&draw(5000)).unwrap();
                small.iter().zip(&reference).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
            })
            .collect();
        dists.sort_by(f64::total_cmp);
        medians.push(0.5 * (dists[49] + dists[50]));
    }
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = medians.iter().map(|m| m.ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / 3.0, ys.iter().sum::<f64>() / 3.0);
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    let decreasing = medians.windows(2).all(|w| w[1] < w[0]);
    verdict(
        decreasing && (-0.65..=-0.35).contains(&slope),
        format!(
            "median distance n=10: {:.4}, n=100: {:.4}, n=1000: {:.4}; log-log slope {slope:.3} in [-0.65, -0.35]",
            medians[0], medians[1], medians[2]
        ),
    )
}

fn weighting_benefit() -> Verdict {
    let mut wins = 0;
    let mut first_gap = 0.0;
    let mut gaps = Vec::new();
    for rep in 0..10u64 {
        let mut s = spec(
            Problem::TwoSample,
            SweepParam::AmplitudeDifference,
            vec![0.2],
            vec![Method::Rmmd, Method::RmmdUnweighted],
            1090 + rep,
        );
        s.set_sizes = SetSizes::TwoPoint {
            small: 3,
            large: 50,
            small_fraction: 0.6,
        };
        let rows = rows_of(&s);
        let gap = rows[0].rejection_rate - rows[1].rejection_rate;
        if rep == 0 {
            first_gap = gap;
        }
        if gap > 0.0 {
            wins += 1;
        }
        gaps.push(format!("{gap:+.3}"));
    }
    verdict(
        first_gap >= -0.02 && wins > 5,
        format!(
            "weighted minus unweighted power per sweep [{}]; first >= -0.02, strictly higher in {wins}/10",
            gaps.join(" ")
        ),
    )
}

/// Asymptotic Kolmogorov tail with the usual finite-sample correction.
fn ks_p_value(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let x = (sn + 0.12 + 0.11 / sn) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = 2.0 * (-2.0 * kf * kf * x * x).exp();
        p += if k % 2 == 1 { term } else { -term };
    }
    p.clamp(0.0, 1.0)
}

fn p_value_uniformity() -> Verdict {
    let mut ps: Vec<f64> = (0..200u64)
        .map(|t| {
            let design = |seed: u64| TwoSampleDesign::new(1.0, 0.1, 100, seed);
            let x = synthetic::gen_two_sample(&design(110_000 + 2 * t)).unwrap();
            let y = synthetic::gen_two_sample(&design(110_001 + 2 * t)).unwrap();
            let config = TestConfig {
                n_permutations: 200,
                seed: t,
                ..TestConfig::default()
            };
            pipeline::run_two_sample(&x, &y, &config).unwrap().result.p_value
        })
        .collect();
    ps.sort_by(f64::total_cmp);
    let n = ps.len() as f64;
    let d = ps
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 / n - p).max(p - i as f64 / n))
        .fold(0.0, f64::max);
    let p = ks_p_value(d, ps.len());
    verdict(p > 0.01, format!("KS distance {d:.4}, p-value {p:.3} (> 0.01)"))
}

fn cli(args: &[&str]) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_setkernel"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    out.stdout
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let p = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let (a, b, pairs) = (p("a.jsonl"), p("b.jsonl"), p("pairs.jsonl"));
    cli(&["gen", "two-sample", "--eta", "1", "--sigma", "0.1", "--n", "60", "--seed", "1", "-o", &a]);
    cli(&["gen", "two-sample", "--eta", "1.3", "--sigma", "0.1", "--n", "60", "--seed", "2", "-o", &b]);
    cli(&["gen", "independence", "--noise", "0.3", "--link", "cos", "--n", "60", "--seed", "3", "-o", &pairs]);
    let spec_path = p("spec.json");
    std::fs::write(
        &spec_path,
        r#"{"problem":"independence","sweep_param":"noise","sweep_values":[0.2,0.6],
            "methods":["rhsic","fixed_hsic","pcc"],"trials":6,"n_sets":40,"n_permutations":99,"seed":11}"#,
    )
    .unwrap();
    let mut identical = true;
    let mut checked = 0;
    for (label, args) in [
        ("two-sample", vec!["two-sample", a.as_str(), b.as_str(), "--seed", "5", "--retain-null"]),
        ("independence", vec!["independence", pairs.as_str(), "--seed", "6"]),
    ] {
        let runs: Vec<Vec<u8>> = ["1", "1", "4"]
            .iter()
            .map(|t| {
                let mut full = vec!["--threads", t];
                full.extend(&args);
                cli(&full)
            })
            .collect();
        if runs.iter().any(|r| r != &runs[0]) {
            identical = false;
            eprintln!("{label} output differs between runs");
        }
        checked += 1;
    }
    let csvs: Vec<Vec<u8>> = ["1", "1", "4"]
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let out = p(&format!("bench{i}.csv"));
            cli(&["--threads", t, "benchmark", &spec_path, "-o", &out]);
            std::fs::read(Path::new(&out)).unwrap()
        })
        .collect();
    if csvs.iter().any(|c| c != &csvs[0]) {
        identical = false;
    }
    checked += 1;
    verdict(
        identical,
        format!("{checked} commands byte-identical across repeated runs and 1 vs 4 threads"),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 11] = [
        ("Type-I calibration, two-sample", type_one_two_sample),
        ("Type-I calibration, independence", type_one_independence),
        ("power trend, two-sample", power_two_sample),
        ("power trend, independence", power_independence),
        ("oracle equivalence, RMMD", oracle_rmmd),
        ("oracle equivalence, RHSIC", oracle_rhsic),
        ("random feature convergence", rff_convergence),
        ("embedding convergence", embedding_convergence),
        ("set-size weighting benefit", weighting_benefit),
        ("p-value uniformity", p_value_uniformity),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let status = if v.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {:>2} {status}: {name}: {} [{:.1}s]",
            i + 1,
            v.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
