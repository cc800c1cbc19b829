//! `agal`: covariance cleaning, target portfolios, constrained tracking,
//! backtests and the exploration studies from the command line.

mod commands;
mod files;
mod manifest;
mod repro;

use std::path::PathBuf;
use std::process::ExitCode;

use agal_core::AgalError;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "agal", version, about = "Risk-based and agnostic portfolio construction")]
pub struct Cli {
    /// Seed for synthetic data, cleaning folds and bootstrap draws.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "AGAL_JOBS")]
    pub jobs: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, default_value = "agal-out")]
    pub out: PathBuf,

    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    pub verbose: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate or ingest price panels.
    #[command(subcommand)]
    Data(DataCommand),
    /// Estimate a covariance matrix over a date window.
    Cov(CovArgs),
    /// Build an unconstrained target portfolio.
    Target(TargetArgs),
    /// Track a target with a long-only capped portfolio.
    Optimize(OptimizeArgs),
    /// Run a rebalancing backtest from a TOML config.
    Backtest(BacktestArgs),
    /// Bootstrap sweep over `a` and the eigenmode projection study.
    Explore(ExploreArgs),
    /// Low-vol and low-beta factors and method exposures.
    Factors(FactorsArgs),
    /// Regenerate every study on synthetic data.
    Repro(ReproArgs),
}

#[derive(Debug, Subcommand)]
pub enum DataCommand {
    /// Synthetic factor-model universe.
    Synth(SynthArgs),
    /// Validate a long-format price file and derive returns.
    Ingest(IngestArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 250)]
    pub assets: usize,
    #[arg(long, default_value_t = 3500)]
    pub days: usize,
    /// Market factor plus sector factors.
    #[arg(long, default_value_t = 10)]
    pub factors: usize,
    /// Annualized extra return of the lowest-vol names.
    #[arg(long, default_value_t = 0.0)]
    pub low_vol_premium: f64,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Long CSV: date,asset_id,price[,market_cap].
    #[arg(long)]
    pub prices: PathBuf,
    /// Optional long CSV: date,asset_id,market_cap.
    #[arg(long)]
    pub caps: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CovMethod {
    Raw,
    CrossValidated,
}

#[derive(Debug, Args)]
pub struct CovArgs {
    /// Wide returns CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// First date of the window (inclusive); defaults to the first date.
    #[arg(long)]
    pub start: Option<chrono::NaiveDate>,
    /// Last date of the window (inclusive); defaults to the last date.
    #[arg(long)]
    pub end: Option<chrono::NaiveDate>,
    #[arg(long, value_enum, default_value_t = CovMethod::CrossValidated)]
    pub method: CovMethod,
    /// Divide each day by its cross-sectional dispersion first.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, default_value_t = 100)]
    pub folds: usize,
    #[arg(long, default_value_t = 0.10)]
    pub holdout: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq)]
pub enum SpecName {
    Mc,
    EqualWeight,
    EqualVol,
    Mvp,
    Mdp,
    Erc,
    Aap,
    SparseAap,
    Continuum,
}

#[derive(Debug, Args)]
pub struct TargetArgs {
    /// Covariance CSV as written by `cov`.
    #[arg(long)]
    pub cov: PathBuf,
    #[arg(long, value_enum, default_value_t = SpecName::Aap)]
    pub spec: SpecName,
    #[arg(long, default_value_t = 0.5)]
    pub a: f64,
    #[arg(long, default_value_t = 0.0)]
    pub b: f64,
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    #[arg(long, default_value_t = 0.05)]
    pub k_star_fraction: f64,
    /// asset_id,market_cap CSV; required for `mc` and continuum `c != 0`.
    #[arg(long)]
    pub caps: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AlgorithmName {
    ActiveSet,
    ProjectedGradient,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    #[arg(long)]
    pub cov: PathBuf,
    /// asset_id,weight CSV as written by `target`.
    #[arg(long)]
    pub target: PathBuf,
    /// Largest weight as a fraction of the invested total.
    #[arg(long, default_value_t = 0.03)]
    pub cap: f64,
    #[arg(long, value_enum, default_value_t = AlgorithmName::ActiveSet)]
    pub algorithm: AlgorithmName,
    #[arg(long, default_value_t = 1e-8)]
    pub tolerance: f64,
    #[arg(long, default_value_t = 50_000)]
    pub max_iterations: usize,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// TOML file with `[data]` and `[backtest]` tables.
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExploreArgs {
    /// Long CSV with prices and market caps, complete histories.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub n_boot: usize,
    #[arg(long, default_value_t = 250)]
    pub sample_size: usize,
    #[arg(long, value_delimiter = ',', default_value = "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1")]
    pub a_grid: Vec<f64>,
    /// Covariance window as a multiple of the sample size.
    #[arg(long, default_value_t = 2)]
    pub window_multiple: usize,
    /// Cleaning folds for the cross-validated runs.
    #[arg(long, default_value_t = 100)]
    pub folds: usize,
    /// Run the raw covariance only.
    #[arg(long)]
    pub raw_only: bool,
    #[arg(long, default_value_t = 300)]
    pub projection_boots: usize,
    #[arg(long, default_value_t = 500)]
    pub projection_size: usize,
}

#[derive(Debug, Args)]
pub struct FactorsArgs {
    /// Wide returns CSV.
    #[arg(long)]
    pub returns: PathBuf,
    /// Backtest report directory (reads daily_returns.csv).
    #[arg(long)]
    pub backtest: PathBuf,
    /// Label of the first column of the exposure table.
    #[arg(long, default_value = "all")]
    pub zone: String,
}

#[derive(Debug, Args)]
pub struct ReproArgs {
    /// Large sizes (1000 assets, 3500 days, 100 folds) instead of the quick defaults.
    #[arg(long)]
    pub full: bool,
}

/// Exit status for a failed command: 2 input, 3 convergence, 4 infeasible.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<AgalError>() {
            return match e.root() {
                AgalError::Convergence { .. } => 3,
                AgalError::Infeasible(_) => 4,
                AgalError::Singular(_) | AgalError::CleaningFailed(_) | AgalError::DegenerateResidual => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<std::io::Error>().is_some() || cause.downcast_ref::<toml::de::Error>().is_some() {
            return 2;
        }
        if cause.downcast_ref::<csv::Error>().is_some() || cause.downcast_ref::<serde_json::Error>().is_some() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .filter_level(if cli.verbose {
            log::LevelFilter::Info
        } else {
            log::LevelFilter::Warn
        })
        .parse_default_env()
        .init();
    if let Some(j) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
