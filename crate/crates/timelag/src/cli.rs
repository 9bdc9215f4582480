//! Command-line front end. [`run`] parses arguments, executes one command
//! and returns the process exit code.
//!
//! Exit codes: 0 success, 1 internal error, 2 usage or IO error,
//! 3 insufficient data.

use crate::experiments::{bickley, msm, sindy, sqrt};
use crate::io::{self, InputError, TrajectorySidecar};
use crate::report::{ExperimentReport, Metric};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DMatrix;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;
use timelag_core::datasets::{bickley_flow, double_well_2d, quadwell_1d, sample_sqrt_model, BickleyConfig, FourWellPotential};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INTERNAL: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INSUFFICIENT: i32 = 3;

/// A command line that parses but cannot be executed as given.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "timelag", version, about = "Learn dynamical models from time series and rerun the reference experiments")]
pub struct Cli {
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Directory for the report and its artifacts.
    #[arg(long, global = true, default_value = "timelag-out")]
    pub out: PathBuf,
    /// Summary printed on stdout.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dimension reduction on the sqrt-transformed two-state model.
    SqrtExperiment(SqrtArgs),
    /// Coherent sets of the Bickley jet.
    BickleyExperiment(BickleyArgs),
    /// Sparse identification of governing equations.
    Sindy(SindyArgs),
    /// Markov state model from discrete trajectories.
    Msm(MsmArgs),
    /// Generate a trajectory of a built-in system.
    Simulate(SimulateArgs),
    /// Double-well generator throughput.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SqrtArgs {
    /// Comma-separated subset of tica, edmd, backtransform, kernel_edmd, kernel_cca.
    #[arg(long, value_delimiter = ',', default_value = "tica,edmd,backtransform,kernel_edmd,kernel_cca")]
    pub methods: Vec<String>,
    #[arg(long, default_value_t = 1000)]
    pub n_frames: usize,
    #[arg(long, default_value_t = 10)]
    pub folds: usize,
    #[arg(long, default_value_t = 1.42)]
    pub kernel_edmd_sigma: f64,
    #[arg(long, default_value_t = 6.7e-4)]
    pub kernel_edmd_epsilon: f64,
    #[arg(long, default_value_t = 0.85)]
    pub kernel_cca_sigma: f64,
    #[arg(long, default_value_t = 0.36)]
    pub kernel_cca_epsilon: f64,
}

#[derive(Debug, Args)]
pub struct BickleyArgs {
    /// Comma-separated subset of kernel_cca, vamp, kvad.
    #[arg(long, value_delimiter = ',', default_value = "kvad,vamp,kernel_cca")]
    pub methods: Vec<String>,
    /// Training particles.
    #[arg(long = "n", default_value_t = 3000)]
    pub n_train: usize,
    #[arg(long, default_value_t = 9)]
    pub k: usize,
    #[arg(long, default_value_t = 500)]
    pub restarts: usize,
    #[arg(long, default_value_t = 15)]
    pub rounds: usize,
    /// Particles per scoring round.
    #[arg(long, default_value_t = 2500)]
    pub n_test: usize,
    #[arg(long, default_value_t = 0.58)]
    pub kcca_sigma: f64,
    #[arg(long, default_value_t = 5.6e-3)]
    pub kcca_epsilon: f64,
}

#[derive(Debug, Args)]
pub struct SindyArgs {
    /// Trajectory CSV, one frame per row.
    #[arg(long, required_unless_present = "rossler")]
    pub input: Option<PathBuf>,
    /// Use the bundled Rössler trajectory instead of a file.
    #[arg(long, conflicts_with = "input")]
    pub rossler: bool,
    /// `identity` or `poly:<degree>`.
    #[arg(long, default_value = "poly:2")]
    pub library: sindy::LibrarySpec,
    #[arg(long, default_value_t = 0.05)]
    pub threshold: f64,
    /// Sample spacing; ignored with --time-column.
    #[arg(long)]
    pub dt: Option<f64>,
    /// First column holds the sample times.
    #[arg(long)]
    pub time_column: bool,
}

#[derive(Debug, Args)]
pub struct MsmArgs {
    /// Discrete trajectory files (integers separated by commas or whitespace).
    #[arg(long, required = true, num_args = 1..)]
    pub input: Vec<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub lag: usize,
    /// Enforce detailed balance.
    #[arg(long)]
    pub reversible: bool,
    /// Number of implied timescales.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = CountingArg::Sliding)]
    pub counting: CountingArg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CountingArg {
    Sliding,
    Strided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SystemArg {
    DoubleWell,
    FourWell,
    Sqrt,
    Rossler,
    Bickley,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub system: SystemArg,
    /// Frames (particles for bickley).
    #[arg(long, default_value_t = 10_000)]
    pub n_frames: usize,
    /// Integration step.
    #[arg(long)]
    pub dt: Option<f64>,
    /// Integration steps per stored frame (stochastic systems).
    #[arg(long)]
    pub substeps: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 10_000_000)]
    pub steps: usize,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
}

/// Exit code for an error, from the first recognized cause.
pub fn exit_code(err: &anyhow::Error) -> i32 {
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<InputError>() || cause.is::<std::io::Error>() {
            return EXIT_USAGE;
        }
        if let Some(e) = cause.downcast_ref::<timelag_core::Error>() {
            return match e {
                timelag_core::Error::InsufficientData(_) => EXIT_INSUFFICIENT,
                timelag_core::Error::InvalidArgument(_) => EXIT_USAGE,
                _ => EXIT_INTERNAL,
            };
        }
    }
    EXIT_INTERNAL
}

/// Parse `args` (including the program name), run, and report errors on
/// stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(&cli) {
        Ok(report) => {
            let summary = match cli.format {
                Format::Json => report.to_json().map(|s| s + "\n"),
                Format::Csv => Ok(report.metrics_csv()),
            };
            match summary {
                Ok(s) => {
                    let _ = std::io::stdout().write_all(s.as_bytes());
                    EXIT_OK
                }
                Err(e) => {
                    eprintln!("error: {e:#}");
                    EXIT_INTERNAL
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}

/// Run the parsed command; the report is also written to `<out>/report.json`.
pub fn execute(cli: &Cli) -> Result<ExperimentReport> {
    let start = Instant::now();
    let out = cli.out.as_path();
    let mut report = match &cli.command {
        Command::SqrtExperiment(a) => cmd_sqrt(a, cli.seed, out)?,
        Command::BickleyExperiment(a) => cmd_bickley(a, cli.seed, out)?,
        Command::Sindy(a) => cmd_sindy(a, out)?,
        Command::Msm(a) => cmd_msm(a, out)?,
        Command::Simulate(a) => cmd_simulate(a, cli.seed, out)?,
        Command::Bench(a) => cmd_bench(a)?,
    };
    report.seed = cli.seed;
    report.wall_seconds = start.elapsed().as_secs_f64();
    write_csv(out, "metrics.csv", &mut report, |_| Ok(String::new()))?;
    report.write(out)?;
    Ok(report)
}

/// Write an artifact into `out` and record it in the report. The closure
/// receives the report for artifacts derived from it.
fn write_csv(out: &Path, name: &str, report: &mut ExperimentReport, body: impl FnOnce(&ExperimentReport) -> Result<String>) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let text = if name == "metrics.csv" { report.metrics_csv() } else { body(report)? };
    let path = out.join(name);
    std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    report.artifacts.push(PathBuf::from(name));
    Ok(())
}

fn artifact(out: &Path, name: &str, report: &mut ExperimentReport, header: &[&str], m: &DMatrix<f64>) -> Result<()> {
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    write_csv(out, name, report, |_| Ok(io::matrix_to_csv(Some(&header), m)))
}

fn cmd_sqrt(a: &SqrtArgs, seed: u64, out: &Path) -> Result<ExperimentReport> {
    let methods = a
        .methods
        .iter()
        .map(|m| sqrt::SqrtMethod::parse(m).ok_or_else(|| UsageError(format!("unknown method `{m}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let params = sqrt::SqrtParams {
        n_frames: a.n_frames,
        folds: a.folds,
        kernel_edmd_sigma: a.kernel_edmd_sigma,
        kernel_edmd_epsilon: a.kernel_edmd_epsilon,
        kernel_cca_sigma: a.kernel_cca_sigma,
        kernel_cca_epsilon: a.kernel_cca_epsilon,
        seed,
        ..Default::default()
    };
    let (sample, outcomes) = sqrt::run(&methods, &params)?;
    let mut report = sqrt::report(&outcomes, &params, 0.0)?;
    let n = sample.observations.nrows();
    for o in &outcomes {
        let m = DMatrix::from_fn(n, 5, |i, j| match j {
            0 => sample.observations[(i, 0)],
            1 => sample.observations[(i, 1)],
            2 => o.projection[i],
            3 => o.labels[i] as f64,
            _ => sample.hidden[i] as f64,
        });
        artifact(out, &format!("sqrt_{}_projection.csv", o.method.name()), &mut report, &["x", "y", "projection", "label", "hidden"], &m)?;
    }
    Ok(report)
}

fn cmd_bickley(a: &BickleyArgs, seed: u64, out: &Path) -> Result<ExperimentReport> {
    let methods = a
        .methods
        .iter()
        .map(|m| bickley::BickleyMethod::parse(m).ok_or_else(|| UsageError(format!("unknown method `{m}`"))))
        .collect::<Result<Vec<_>, _>>()?;
    let params = bickley::BickleyParams {
        n_train: a.n_train,
        n_test: a.n_test,
        rounds: a.rounds,
        n_sets: a.k,
        restarts: a.restarts,
        kcca_sigma: a.kcca_sigma,
        kcca_epsilon: a.kcca_epsilon,
        seed,
        ..Default::default()
    };
    let (data, outcomes) = bickley::run(&methods, &params)?;
    let mut report = bickley::report(&outcomes, &params, 0.0)?;
    for o in &outcomes {
        let m = DMatrix::from_fn(data.x.nrows(), 3, |i, j| if j < 2 { data.x[(i, j)] } else { o.train_labels[i] as f64 });
        artifact(out, &format!("bickley_{}_sets.csv", o.method.name()), &mut report, &["x", "y", "set"], &m)?;
    }
    Ok(report)
}

fn cmd_sindy(a: &SindyArgs, out: &Path) -> Result<ExperimentReport> {
    let params = sindy::SindyParams { library: a.library, threshold: a.threshold, dt: a.dt };
    let (frames, times, names) = if a.rossler {
        let dt = a.dt.unwrap_or(1e-3);
        (sindy::rossler_data(100.0, dt)?, None, None)
    } else {
        let path = a.input.as_ref().ok_or_else(|| UsageError("give --input or --rossler".into()))?;
        let t = io::read_trajectory_csv(path, a.time_column)?;
        (t.frames, t.times, t.header)
    };
    let params = sindy::SindyParams { dt: params.dt.or(if a.rossler { Some(1e-3) } else { None }), ..params };
    let outcome = sindy::fit(&frames, times.as_deref(), &params)?;
    let mut report = sindy::report(&outcome, &params)?;
    let equations = outcome.model.equations(6);
    for line in &equations {
        eprintln!("{line}");
    }
    let (terms, xi) = sindy::coefficient_table(&outcome.model);
    let header: Vec<&str> = terms.iter().map(String::as_str).collect();
    artifact(out, "coefficients.csv", &mut report, &header, &xi)?;
    let d = frames.ncols();
    let state_names: Vec<String> = names.unwrap_or_else(|| (0..d).map(|i| format!("x{i}")).collect());
    let mut header = vec!["t".to_string()];
    header.extend(state_names);
    let recon = DMatrix::from_fn(outcome.times.len(), d + 1, |i, j| if j == 0 { outcome.times[i] } else { outcome.reconstruction[(i, j - 1)] });
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    artifact(out, "reconstruction.csv", &mut report, &header, &recon)?;
    write_csv(out, "equations.txt", &mut report, |_| Ok(equations.join("\n") + "\n"))?;
    Ok(report)
}

fn cmd_msm(a: &MsmArgs, out: &Path) -> Result<ExperimentReport> {
    let trajs = a.input.iter().map(|p| io::read_discrete_trajectory(p)).collect::<Result<Vec<_>, _>>()?;
    let params = msm::MsmParams {
        lag: a.lag,
        reversible: a.reversible,
        k: a.k,
        counting: match a.counting {
            CountingArg::Sliding => msm::CountingModeName::Sliding,
            CountingArg::Strided => msm::CountingModeName::Strided,
        },
        ..Default::default()
    };
    let outcome = msm::estimate(&trajs, &params)?;
    let mut report = msm::report(&outcome, &params, trajs.len())?;
    let n = outcome.active_set.len();
    let states: Vec<String> = outcome.active_set.iter().map(|s| format!("s{s}")).collect();
    let header: Vec<&str> = states.iter().map(String::as_str).collect();
    artifact(out, "transition_matrix.csv", &mut report, &header, &outcome.msm.transition_matrix)?;
    let pi = DMatrix::from_fn(n, 2, |i, j| if j == 0 { outcome.active_set[i] as f64 } else { outcome.msm.stationary_distribution[i] });
    artifact(out, "stationary_distribution.csv", &mut report, &["state", "probability"], &pi)?;
    artifact(out, "eigenvalues.csv", &mut report, &["eigenvalue"], &msm::column(&outcome.eigenvalues))?;
    artifact(out, "timescales.csv", &mut report, &["timescale"], &msm::column(&outcome.timescales))?;
    write_csv(out, "msm.json", &mut report, |_| io::model_to_json("markov_state_model", &outcome.msm))?;
    Ok(report)
}

fn cmd_simulate(a: &SimulateArgs, seed: u64, out: &Path) -> Result<ExperimentReport> {
    let n = a.n_frames;
    if n == 0 {
        return Err(UsageError("--n-frames must be positive".into()).into());
    }
    let (name, header, frames, dt, parameters): (&str, Vec<&str>, DMatrix<f64>, f64, serde_json::Value) = match a.system {
        SystemArg::DoubleWell => {
            let (h, sub) = (a.dt.unwrap_or(1e-3), a.substeps.unwrap_or(100));
            let t = double_well_2d(seed, n, h, sub)?;
            ("double_well", vec!["x", "y"], t.frames, t.dt_effective, serde_json::json!({"h": h, "substeps": sub, "sigma": 0.7}))
        }
        SystemArg::FourWell => {
            let (h, sub) = (a.dt.unwrap_or(1e-3), a.substeps.unwrap_or(10));
            let pot = FourWellPotential::default();
            let t = quadwell_1d(&pot, seed, n, h, sub)?;
            ("four_well", vec!["x"], t.frames, t.dt_effective, serde_json::json!({"h": h, "substeps": sub, "roots": pot.roots, "scale": pot.scale, "sigma": pot.sigma}))
        }
        SystemArg::Sqrt => {
            let s = sample_sqrt_model(n, seed)?;
            let m = DMatrix::from_fn(n, 3, |i, j| if j < 2 { s.observations[(i, j)] } else { s.hidden[i] as f64 });
            ("sqrt", vec!["x", "y", "hidden"], m, 1.0, serde_json::json!({}))
        }
        SystemArg::Rossler => {
            let dt = a.dt.unwrap_or(1e-3);
            let frames = sindy::rossler_data((n - 1) as f64 * dt, dt)?;
            ("rossler", vec!["x", "y", "z"], frames, dt, serde_json::json!({"a": 0.1, "b": 0.1, "c": 14.0}))
        }
        SystemArg::Bickley => {
            use rand::SeedableRng;
            let dt = a.dt.unwrap_or(1e-2);
            let config = BickleyConfig::default();
            let x0 = config.uniform_particles(n, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let x1 = bickley_flow(&config, &x0, 0.0, 40.0, dt)?;
            let m = DMatrix::from_fn(n, 4, |i, j| if j < 2 { x0[(i, j)] } else { x1[(i, j - 2)] });
            ("bickley", vec!["x0", "y0", "x40", "y40"], m, dt, serde_json::json!({"t0": 0.0, "t1": 40.0}))
        }
    };
    let sidecar = TrajectorySidecar { system: name.into(), parameters: parameters.clone(), seed, dt, n_frames: frames.nrows() };
    let header: Vec<String> = header.iter().map(|s| s.to_string()).collect();
    io::write_trajectory(out, name, &header, &frames, &sidecar)?;
    let mut report = ExperimentReport::new("simulate", seed, serde_json::json!({"system": name, "parameters": parameters}));
    report.artifacts.push(format!("{name}.csv").into());
    report.artifacts.push(format!("{name}.json").into());
    report.add_metric("n_frames", Metric::single(frames.nrows() as f64));
    Ok(report)
}

fn cmd_bench(a: &BenchArgs) -> Result<ExperimentReport> {
    let r = crate::bench::double_well_throughput(a.steps, a.repeats)?;
    let mut report = ExperimentReport::new("bench", 0, serde_json::json!({"steps": a.steps, "repeats": a.repeats}));
    report.add_metric("steps_per_second", Metric::single(r.steps_per_second));
    report.add_metric("seconds", Metric::single(r.seconds));
    Ok(report)
}
