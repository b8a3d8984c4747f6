//! `ionflux` command-line driver.

mod commands;
mod files;
mod manifest;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

pub use files::{load_dataset, parse_feed, write_atomic, Dataset};
pub use manifest::{manifest_path, FileDigest, RunManifest};

/// Exit status for a domain, solver or I/O failure.
pub const EXIT_FAILURE: i32 = 1;
/// Exit status for malformed command lines.
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "ionflux",
    version,
    about = "Multi-ion nanofiltration rejection: continuum solver and neural ODE surrogate"
)]
pub struct Cli {
    /// Worker threads; defaults to the number of logical cores.
    #[arg(long, global = true, env = "IONFLUX_JOBS")]
    pub jobs: Option<usize>,

    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Ion database JSON; the bundled table when absent.
    #[arg(long, global = true)]
    pub ion_db: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Continuum rejection curve for one feed.
    Solve(SolveArgs),
    /// Calibrate membrane parameters against a rejection dataset.
    FitMembrane(FitArgs),
    /// Sobol-sampled feeds solved with the continuum model.
    GenData(GenDataArgs),
    /// Train a surrogate on simulated data.
    Pretrain(PretrainArgs),
    /// Adapt a trained surrogate to measurements.
    Finetune(FinetuneArgs),
    /// Surrogate rejection curve for one feed.
    Predict(PredictArgs),
    /// Parity table and error metrics against a dataset.
    Eval(EvalArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve(_) => "solve",
            Command::FitMembrane(_) => "fit-membrane",
            Command::GenData(_) => "gen-data",
            Command::Pretrain(_) => "pretrain",
            Command::Finetune(_) => "finetune",
            Command::Predict(_) => "predict",
            Command::Eval(_) => "eval",
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FluxArgs {
    /// Number of uniformly spaced flux points.
    #[arg(long = "flux-grid", default_value_t = 20)]
    pub points: usize,
    /// Largest flux [m/s].
    #[arg(long, default_value_t = 3e-5)]
    pub flux_max: f64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    /// Pore grid nodes.
    #[arg(long)]
    pub grid_points: Option<usize>,
}

#[derive(Debug, Args, Serialize)]
pub struct SolveArgs {
    #[arg(long)]
    pub membrane: PathBuf,
    /// Feed JSON: ion name to concentration [mol/m³].
    #[arg(long)]
    pub feed: PathBuf,
    #[command(flatten)]
    pub flux: FluxArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FitArgs {
    /// Rejection dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Objective evaluations.
    #[arg(long, default_value_t = 2000)]
    pub budget: usize,
    /// Starting membrane; the centre of the bounds when absent.
    #[arg(long)]
    pub start: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("space").required(true).args(["ions", "salts"])))]
pub struct GenDataArgs {
    #[arg(long)]
    pub membrane: PathBuf,
    /// Comma-separated ion names, each sampled independently; anions are
    /// rescaled to neutralize.
    #[arg(long, value_delimiter = ',')]
    pub ions: Vec<String>,
    /// Comma-separated salts as `cation/anion` (e.g. `Na+/Cl-,Mg++/SO4--`),
    /// each salt concentration sampled independently.
    #[arg(long, value_delimiter = ',')]
    pub salts: Vec<String>,
    /// Lower concentration bound [mol/m³].
    #[arg(long, default_value_t = 1.0)]
    pub min: f64,
    /// Upper concentration bound [mol/m³].
    #[arg(long, default_value_t = 100.0)]
    pub max: f64,
    /// Number of feeds.
    #[arg(long, default_value_t = 256)]
    pub count: usize,
    /// Sobol points to skip before the first feed.
    #[arg(long, default_value_t = 0)]
    pub skip: usize,
    /// Relative Gaussian noise added to every permeate.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    #[arg(long, default_value = "feed")]
    pub id_prefix: String,
    #[command(flatten)]
    pub flux: FluxArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientArg {
    Adjoint,
    Discrete,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1000)]
    pub epochs: usize,
    /// Trajectories per optimizer step.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
    /// Epochs between learning-rate halvings.
    #[arg(long, default_value_t = 200)]
    pub halving_period: usize,
    #[arg(long, value_enum, default_value_t = GradientArg::Adjoint)]
    pub gradient: GradientArg,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub atol: f64,
    /// JSON-lines loss history.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct PretrainArgs {
    /// Simulated dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Hidden layer width.
    #[arg(long, default_value_t = ionflux::node::Architecture::DEFAULT_WIDTH)]
    pub width: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct FinetuneArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Measured dataset CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Simulated dataset to replay from.
    #[arg(long, requires = "replay_fraction")]
    pub replay: Option<PathBuf>,
    /// Share of simulated trajectories replayed per epoch.
    #[arg(long, requires = "replay")]
    pub replay_fraction: Option<f64>,
    /// Reuse one set of noise draws for every epoch.
    #[arg(long)]
    pub freeze_draws: bool,
    #[command(flatten)]
    pub train: TrainArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub feed: PathBuf,
    #[command(flatten)]
    pub flux: FluxArgs,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub atol: f64,
    /// Curve CSV; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
#[command(group(clap::ArgGroup::new("predictor").required(true).args(["model", "membrane"])))]
pub struct EvalArgs {
    /// Surrogate checkpoint to evaluate.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Continuum membrane to evaluate instead of a surrogate.
    #[arg(long)]
    pub membrane: Option<PathBuf>,
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[arg(long, default_value_t = 1e-6)]
    pub rtol: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub atol: f64,
    /// Parity CSV.
    #[arg(long)]
    pub parity: PathBuf,
    /// Metrics JSON.
    #[arg(long)]
    pub out: PathBuf,
}

/// Parses `argv`, runs the command and returns the process exit status.
pub fn run<I, A>(argv: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            EXIT_FAILURE
        }
    }
}

/// Runs a parsed command on a pool sized by `--jobs`.
pub fn execute(cli: &Cli) -> ionflux::Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(ionflux::Error::InvalidInput("--jobs must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| ionflux::Error::InvalidInput(format!("cannot start worker pool: {e}")))?;
    pool.install(|| commands::dispatch(cli))
}
