//! `marbubble` command line: simulation, estimation, bubble detection,
//! time-to-peak reports, latent moments, Monte Carlo tables and data prep.
//!
//! Exit codes: 0 success, 1 I/O, 2 invalid input, 3 numerical failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use marbubble::Error;

mod commands;
mod manifest;

#[derive(Parser, Debug)]
#[command(
    name = "marbubble",
    version,
    about = "Mixed causal-noncausal autoregressions and bubble diagnostics"
)]
pub struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,

    /// Format of tabular outputs.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate a MAR(r,s) path.
    Simulate(SimulateArgs),
    /// Fit a MAR model to a series.
    Estimate(EstimateArgs),
    /// Fit, compute ξ statistics and date bubble episodes.
    Detect(DetectArgs),
    /// Time-to-peak law of a fitted model.
    Duration(DurationArgs),
    /// Conditional latent-component moments for Cauchy MAR(1,1).
    Moments(MomentsArgs),
    /// Size and power tables of the ξ test.
    Mc(McArgs),
    /// Cubic-spline detrending.
    Detrend(DetrendArgs),
    /// Summary statistics, rolling variance and Hill estimate.
    Stats(StatsArgs),
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct ModelArgs {
    /// Causal order.
    #[arg(long, default_value_t = 1)]
    pub r: u8,
    /// Noncausal order.
    #[arg(long, default_value_t = 1)]
    pub s: u8,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub psi: f64,
    /// Error law: t3, t(4.5), cauchy, cauchy:2.
    #[arg(long, default_value = "t3")]
    pub dist: String,
    /// Roots of a second-order model (r + s = 2); overrides phi and psi.
    #[arg(long, num_args = 2, value_names = ["L1", "L2"], allow_negative_numbers = true)]
    pub ar2_roots: Option<Vec<f64>>,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Number of observations.
    #[arg(long = "T", default_value_t = 400)]
    pub t_len: usize,
    #[arg(long, default_value_t = marbubble::model::DEFAULT_BURN)]
    pub burn: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gcov,
    Ols,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct InputArgs {
    /// Headed CSV file.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value = "date")]
    pub date_col: String,
    #[arg(long, default_value = "value")]
    pub value_col: String,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct FitArgs {
    #[arg(long, default_value_t = 1)]
    pub r: u8,
    #[arg(long, default_value_t = 1)]
    pub s: u8,
    #[arg(long, value_enum, default_value_t = Method::Gcov)]
    pub method: Method,
    /// Number of power transformations ε, ε², …, ε^K.
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// Explicit exponents, e.g. 0.5,1,1.5,2; overrides --k.
    #[arg(long, value_delimiter = ',')]
    pub transforms: Option<Vec<f64>>,
    /// Autocovariance lags in the objective.
    #[arg(long, default_value_t = 2)]
    pub h: usize,
    /// Local searches from every grid point instead of the best few.
    #[arg(long)]
    pub full_grid: bool,
    /// Parametric-bootstrap covariance with this many replications.
    #[arg(long)]
    pub bootstrap: Option<usize>,
    /// Diagonal weighting instead of Γ̂(0)⁻¹.
    #[arg(long)]
    pub diagonal: bool,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fit: FitArgs,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct DetectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[command(flatten)]
    pub fit: FitArgs,
    /// Conditioning quantile for exceedances.
    #[arg(long, default_value_t = marbubble::bubble::DEFAULT_THRESHOLD_Q)]
    pub threshold: f64,
    #[arg(long, default_value_t = marbubble::bubble::DEFAULT_MIN_RUN)]
    pub min_run: usize,
    /// Spline-detrend the series before fitting.
    #[arg(long)]
    pub detrend: bool,
    #[arg(long, default_value_t = 24)]
    pub knot_months: u32,
    /// Largest horizon for per-exceedance diagnostics.
    #[arg(long, default_value_t = 10)]
    pub horizons: usize,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct DurationArgs {
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub psi: f64,
    /// Tail index; estimated with the Hill estimator from --input if omitted.
    #[arg(long, allow_negative_numbers = true)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long, default_value = "date")]
    pub date_col: String,
    #[arg(long, default_value = "value")]
    pub value_col: String,
    /// Order statistics used by the Hill estimator.
    #[arg(long)]
    pub hill_k: Option<usize>,
    /// Prediction interval level γ (coverage 1 − γ).
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    /// Horizons m for P[N ≤ −m].
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6")]
    pub months: Vec<u32>,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct MomentsArgs {
    #[arg(long, allow_negative_numbers = true)]
    pub phi: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub psi: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub y_t: f64,
    #[arg(long, allow_negative_numbers = true)]
    pub y_tm1: f64,
    /// Cauchy scale.
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyArg {
    Mar01,
    Mar11,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PickArg {
    First,
    Last,
    Max,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct McArgs {
    #[arg(long, value_enum, default_value_t = FamilyArg::Mar01)]
    pub family: FamilyArg,
    /// Replications per cell.
    #[arg(long = "R", default_value_t = 200)]
    pub replications: usize,
    /// Use 1000 replications per cell.
    #[arg(long)]
    pub full: bool,
    #[arg(long = "T", default_value_t = 400)]
    pub t_len: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub psi: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9")]
    pub phi: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "t3,t4,t5")]
    pub dists: Vec<String>,
    #[arg(long, value_enum, default_value_t = PickArg::First)]
    pub pick: PickArg,
    #[arg(long, default_value_t = 0.975)]
    pub size_quantile: f64,
    #[arg(long, default_value_t = 0.525)]
    pub power_quantile: f64,
    /// GCov transformations for MAR(1,1).
    #[arg(long, default_value_t = 2)]
    pub k: usize,
    /// GCov lags for MAR(1,1).
    #[arg(long, default_value_t = 4)]
    pub h: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryArg {
    Free,
    Natural,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct DetrendArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, default_value_t = 24)]
    pub knot_months: u32,
    #[arg(long, value_enum, default_value_t = BoundaryArg::Free)]
    pub boundary: BoundaryArg,
    /// Resample to month-end (last observation per month) first.
    #[arg(long)]
    pub monthly: bool,
}

#[derive(Args, Debug, Clone, serde::Serialize)]
pub struct StatsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Rolling-variance window.
    #[arg(long, default_value_t = 5)]
    pub window: usize,
    #[arg(long)]
    pub hill_k: Option<usize>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } => 1,
        Error::Parse { .. } | Error::Validation(_) | Error::Stationarity(_) | Error::Unsupported(_) => 2,
        Error::Numerical(_) | Error::SingularCovariance { .. } | Error::Optimization { .. } => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
