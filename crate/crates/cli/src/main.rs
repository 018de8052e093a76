//! `svdd-peak`: train SVDD models, select Gaussian bandwidths and run the
//! simulation studies from the command line.

mod commands;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use svdd_core::SvddError;

#[derive(Debug, Parser)]
#[command(name = "svdd-peak", version, about = "SVDD with Peak bandwidth selection")]
struct Cli {
    /// Worker threads for parallel work (default: all cores).
    #[arg(long, global = true, env = "SVDD_PEAK_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit a model to a CSV dataset.
    Train(TrainArgs),
    /// Select a bandwidth with Peak, CV, MD or DFN.
    Tune(TuneArgs),
    /// Score a CSV file against a model.
    Score(ScoreArgs),
    /// Score a 2-D lattice for boundary plots.
    Grid(GridArgs),
    /// Run the random polygon study.
    Simulate(SimulateArgs),
    /// Generate a banana, star or three-cluster dataset.
    Shapes(ShapesArgs),
    /// Split the Statlog shuttle data into training and evaluation files.
    Shuttle(ShuttleArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Peak,
    Cv,
    Md,
    Dfn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelArg {
    Gaussian,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GridPreset {
    /// 0.05 to 8 by 0.05.
    Low,
    /// 1 to 100 by 1.
    High,
}

/// Bandwidth grid; explicit bounds override the preset.
#[derive(Debug, Clone, Args, Serialize)]
pub struct GridFlags {
    #[arg(long, value_enum, default_value = "low")]
    pub preset: GridPreset,
    #[arg(long)]
    pub s_min: Option<f64>,
    #[arg(long)]
    pub s_max: Option<f64>,
    #[arg(long)]
    pub s_step: Option<f64>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverFlags {
    /// Expected outlier fraction.
    #[arg(long, default_value_t = 0.001)]
    pub f: f64,
    #[arg(long, default_value_t = 1e-6)]
    pub kkt_tol: f64,
    #[arg(long, default_value_t = 100_000)]
    pub max_iterations: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Gaussian bandwidth.
    #[arg(long, conflicts_with = "tune")]
    pub s: Option<f64>,
    /// Pick the bandwidth with this method first.
    #[arg(long, value_enum)]
    pub tune: Option<Method>,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub kernel: KernelArg,
    #[command(flatten)]
    pub solver: SolverFlags,
    #[command(flatten)]
    pub grid: GridFlags,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TuneArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    #[command(flatten)]
    pub grid: GridFlags,
    #[command(flatten)]
    pub solver: SolverFlags,
    /// CV stabilizer added to the mean.
    #[arg(long, default_value_t = svdd_core::baselines::DEFAULT_CV_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = svdd_core::tuning::DEFAULT_MIN_RUN)]
    pub min_run: usize,
    /// Stop the sweep once the plateau has been passed.
    #[arg(long)]
    pub early_stop: bool,
    /// Report JSON.
    #[arg(long)]
    pub out: PathBuf,
    /// Curve CSV (default: next to the report).
    #[arg(long)]
    pub curve: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ScoreArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct GridArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Data whose bounding box the lattice covers (default: the support vectors).
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    /// Full study: vertex counts 5 to 30, twenty polygons each.
    #[arg(long)]
    pub full: bool,
    /// Comma-separated vertex counts.
    #[arg(long, value_delimiter = ',')]
    pub vertices: Option<Vec<usize>>,
    #[arg(long)]
    pub polygons: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.001)]
    pub f: f64,
    #[command(flatten)]
    pub grid: GridFlags,
    #[arg(long, default_value_t = 200)]
    pub resolution: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeArg {
    Banana,
    Star,
    ThreeCluster,
}

#[derive(Debug, Args, Serialize)]
pub struct ShapesArgs {
    #[arg(long, value_enum)]
    pub kind: ShapeArg,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ShuttleArgs {
    /// Local copy of the shuttle file; without it the download location is printed.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub sample_class1: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<SvddError>() {
        Some(SvddError::NoPeakFound { .. }) => 3,
        Some(SvddError::SchemaMismatch { .. } | SvddError::Dimension { .. }) => 2,
        _ => 1,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Command::Train(a) = &cli.command {
        if a.kernel == KernelArg::Gaussian && a.s.is_none() && a.tune.is_none() {
            Cli::command()
                .error(ErrorKind::MissingRequiredArgument, "the gaussian kernel needs --s or --tune")
                .exit();
        }
    }
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("error: cannot set up {jobs} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let result = match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::Tune(a) => commands::tune(a),
        Command::Score(a) => commands::score(a),
        Command::Grid(a) => commands::grid(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Shapes(a) => commands::shapes(a),
        Command::Shuttle(a) => commands::shuttle(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
