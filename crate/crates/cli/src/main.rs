use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use setkernel::data::{self, Weighting};
use setkernel::harness::{self, BenchmarkRow, BenchmarkSpec};
use setkernel::synthetic::{self, IndependenceDesign, Link, SetSizes, TwoSampleDesign};
use setkernel::tuning::{ParamGrid, DEFAULT_MULTIPLIERS, DEFAULT_RIDGE, DEFAULT_SPLIT};
use setkernel::{pipeline, Error, Outcome, SecondLevel, TestConfig};

const EXIT_INPUT: u8 = 2;
const EXIT_DEGENERATE: u8 = 3;

#[derive(Parser)]
#[command(name = "setkernel", version, about = "Kernel tests on samples of point sets")]
struct Cli {
    /// Cap on worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test whether two samples of sets come from the same meta-distribution.
    TwoSample {
        /// First sample (JSONL, one set per line).
        x: PathBuf,
        /// Second sample.
        y: PathBuf,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Test independence between the two sides of paired sets.
    Independence {
        /// Paired sample (JSONL with `x` and `y` per line).
        input: PathBuf,
        #[command(flatten)]
        test: TestArgs,
    },
    /// Write a synthetic sample.
    Gen {
        #[command(subcommand)]
        design: GenCommand,
    },
    /// Run a rejection-rate sweep described by a JSON spec.
    Benchmark {
        spec: PathBuf,
        /// CSV destination.
        #[arg(long, short)]
        output: PathBuf,
        /// Also write the rows as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Record wall-clock seconds per cell (makes the CSV run-dependent).
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightingArg {
    SetSize,
    Uniform,
}

#[derive(Args)]
struct TestArgs {
    #[arg(long, default_value_t = pipeline::DEFAULT_ALPHA)]
    alpha: f64,
    #[arg(long, default_value_t = pipeline::DEFAULT_PERMUTATIONS)]
    permutations: usize,
    /// Random Fourier features per embedding.
    #[arg(long, default_value_t = pipeline::DEFAULT_FEATURES)]
    features: usize,
    /// Comma-separated multipliers of the level-1 median heuristic.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MULTIPLIERS.to_vec())]
    level1_multipliers: Vec<f64>,
    /// Comma-separated multipliers of the level-2 median heuristic.
    #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_MULTIPLIERS.to_vec())]
    level2_multipliers: Vec<f64>,
    /// Fraction of sets used for tuning.
    #[arg(long, default_value_t = DEFAULT_SPLIT)]
    split: f64,
    #[arg(long, default_value_t = DEFAULT_RIDGE)]
    ridge: f64,
    /// Set-size weights (or weights given in the file), or uniform weights.
    #[arg(long, value_enum, default_value = "set-size")]
    weighting: WeightingArg,
    /// Use the sample weights in the tuning criterion instead of uniform ones.
    #[arg(long)]
    weighted_criterion: bool,
    /// Skip tuning; use median heuristics on all sets.
    #[arg(long)]
    no_tune: bool,
    /// Linear kernel between embeddings instead of a Gaussian.
    #[arg(long)]
    linear_level2: bool,
    /// Inner permutations for the independence tuning criterion.
    #[arg(long, default_value_t = pipeline::DEFAULT_INNER_PERMUTATIONS)]
    inner_permutations: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Result destination; standard output when absent.
    #[arg(long, short)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Include the permutation null statistics in the result.
    #[arg(long)]
    retain_null: bool,
    /// Write the tuning table as JSON.
    #[arg(long)]
    tuning_report: Option<PathBuf>,
}

impl TestArgs {
    fn config(&self) -> TestConfig {
        TestConfig {
            alpha: self.alpha,
            n_permutations: self.permutations,
            n_features: self.features,
            grid: ParamGrid {
                level1_multipliers: self.level1_multipliers.clone(),
                level2_multipliers: self.level2_multipliers.clone(),
                split_fraction: self.split,
                ridge: self.ridge,
                weighted_criterion: self.weighted_criterion,
            },
            weighting: match self.weighting {
                WeightingArg::SetSize => Weighting::SetSize,
                WeightingArg::Uniform => Weighting::Uniform,
            },
            tune: !self.no_tune,
            second_level: if self.linear_level2 { SecondLevel::Linear } else { SecondLevel::Gaussian },
            inner_permutations: self.inner_permutations,
            seed: self.seed,
            retain_null: self.retain_null,
        }
    }
}

#[derive(Args)]
struct SizeArgs {
    /// Smallest set size.
    #[arg(long, default_value_t = synthetic::DEFAULT_SET_SIZES.0)]
    size_min: usize,
    /// Largest set size.
    #[arg(long, default_value_t = synthetic::DEFAULT_SET_SIZES.1)]
    size_max: usize,
    /// Use two set sizes instead: `size_min` for this fraction of sets, `size_max` for the rest.
    #[arg(long)]
    small_fraction: Option<f64>,
}

impl SizeArgs {
    fn sizes(&self) -> SetSizes {
        match self.small_fraction {
            Some(f) => SetSizes::TwoPoint {
                small: self.size_min,
                large: self.size_max,
                small_fraction: f,
            },
            None => SetSizes::Uniform {
                low: self.size_min,
                high: self.size_max,
            },
        }
    }
}

#[derive(Subcommand)]
enum GenCommand {
    /// Noisy sine series with inverse-gamma noise levels.
    TwoSample {
        #[arg(long)]
        eta: f64,
        /// Baseline noise variance.
        #[arg(long)]
        sigma: f64,
        /// Number of sets.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = synthetic::DEFAULT_INVGAMMA_SHAPE)]
        invgamma_shape: f64,
        #[arg(long, default_value_t = 1)]
        dims: usize,
        #[command(flatten)]
        sizes: SizeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Pairs of series linked through a shared latent curve.
    Independence {
        /// Observation noise standard deviation.
        #[arg(long)]
        noise: f64,
        #[arg(long, value_parser = parse_link)]
        link: Link,
        /// Number of pairs.
        #[arg(long)]
        n: usize,
        /// Draw the y-side latents independently (no dependence).
        #[arg(long)]
        severed: bool,
        /// Reuse the x-side set sizes and times on the y side. Shared sizes
        /// couple the two sides, so `--severed` no longer gives independence.
        #[arg(long)]
        shared_times: bool,
        #[arg(long, default_value_t = 1)]
        dims: usize,
        #[command(flatten)]
        sizes: SizeArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, short)]
        output: PathBuf,
    },
}

fn parse_link(s: &str) -> Result<Link, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug)]
enum Failure {
    Lib(Error),
    Input(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::Input(format!("{}: {e}", path.display()))
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes")
}

fn result_csv(outcome: &Outcome) -> String {
    let r = &outcome.result;
    let p = &r.selected_params;
    let opt = |v: Option<f64>| v.map_or(String::new(), |x| x.to_string());
    format!(
        "statistic,p_value,reject,alpha,n_permutations,level1_sq,level1_y_sq,level2_sq,level2_l_sq,seed\n{},{},{},{},{},{},{},{},{},{}\n",
        r.statistic,
        r.p_value,
        r.reject,
        r.alpha,
        r.n_permutations,
        p.level1_sq,
        opt(p.level1_y_sq),
        p.level2_sq,
        opt(p.level2_l_sq),
        r.seed
    )
}

fn emit(text: &str, path: Option<&Path>) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| io_failure(p, e)),
        None => std::io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| Failure::Input(format!("stdout: {e}"))),
    }
}

fn finish_test(outcome: &Outcome, args: &TestArgs) -> Result<(), Failure> {
    let r = &outcome.result;
    eprintln!("basis fingerprints: {}", r.basis_fingerprints.join(", "));
    eprintln!("selected params: {}", serde_json::to_string(&r.selected_params).expect("params serialize"));
    eprintln!("statistic {} p-value {} reject {}", r.statistic, r.p_value, r.reject);
    if let (Some(path), Some(report)) = (&args.tuning_report, &outcome.tuning) {
        fs::write(path, report.to_json() + "\n").map_err(|e| io_failure(path, e))?;
    }
    let text = match args.format {
        Format::Json => to_json(r) + "\n",
        Format::Csv => result_csv(outcome),
    };
    emit(&text, args.output.as_deref())
}

fn log_config(config: &TestConfig) {
    eprintln!("config: {}", serde_json::to_string(config).expect("config serializes"));
    eprintln!("seed: {}", config.seed);
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::TwoSample { x, y, test } => {
            let config = test.config();
            log_config(&config);
            let sx = data::load_two_sample(&x)?;
            let sy = data::load_two_sample(&y)?;
            let outcome = pipeline::run_two_sample(&sx, &sy, &config)?;
            finish_test(&outcome, &test)
        }
        Command::Independence { input, test } => {
            let config = test.config();
            log_config(&config);
            let paired = data::load_paired(&input)?;
            let outcome = pipeline::run_independence(&paired, &config)?;
            finish_test(&outcome, &test)
        }
        Command::Gen { design } => gen(design),
        Command::Benchmark {
            spec,
            output,
            json,
            timing,
        } => {
            let text = fs::read_to_string(&spec).map_err(|e| io_failure(&spec, e))?;
            let mut parsed = BenchmarkSpec::from_json(&text)
                .map_err(|e| Failure::Input(format!("{}: {e}", spec.display())))?;
            parsed.record_timing |= timing;
            eprintln!("spec: {}", serde_json::to_string(&parsed).expect("spec serializes"));
            eprintln!("seed: {}", parsed.seed);
            let rows = harness::run_benchmark_with_progress(&parsed, |row: &BenchmarkRow, errors: &[String]| {
                eprintln!(
                    "{} {}={}: rate {:.3} (se {:.3}) over {} trials, {} failed",
                    row.method, row.sweep_param, row.sweep_value, row.rejection_rate, row.standard_error, row.trials, row.failures
                );
                for e in errors {
                    eprintln!("  {e}");
                }
            })?;
            harness::write_csv(&rows, &output)?;
            if let Some(path) = json {
                harness::write_json(&rows, &path)?;
            }
            Ok(())
        }
    }
}

fn gen(design: GenCommand) -> Result<(), Failure> {
    match design {
        GenCommand::TwoSample {
            eta,
            sigma,
            n,
            invgamma_shape,
            dims,
            sizes,
            seed,
            output,
        } => {
            let design = TwoSampleDesign {
                eta,
                sigma,
                invgamma_shape,
                n_sets: n,
                set_sizes: sizes.sizes(),
                dims,
                seed,
            };
            eprintln!("design: {}", serde_json::to_string(&design).expect("design serializes"));
            let sample = synthetic::gen_two_sample(&design)?;
            data::save_sample(&output, &sample, false)?;
        }
        GenCommand::Independence {
            noise,
            link,
            n,
            severed,
            shared_times,
            dims,
            sizes,
            seed,
            output,
        } => {
            let design = IndependenceDesign {
                noise,
                link,
                n_pairs: n,
                set_sizes: sizes.sizes(),
                dims,
                shared_times,
                seed,
            };
            eprintln!(
                "design: {} dependent={}",
                serde_json::to_string(&design).expect("design serializes"),
                !severed
            );
            let sample = synthetic::gen_independence(&design, !severed)?;
            data::save_paired(&output, &sample, false)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: could not configure threads: {e}");
            return ExitCode::from(EXIT_INPUT);
        }
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_degenerate() { EXIT_DEGENERATE } else { EXIT_INPUT })
        }
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}
