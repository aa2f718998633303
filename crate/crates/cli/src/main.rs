//! `skypattern`: learn, complete and evaluate combined UAV-to-ground
//! radiation patterns from flight logs.
//!
//! Exit codes: 0 on success, 2 on a usage error, 1 on a runtime error.
//! Runtime errors are printed to stderr as one JSON object per line.

mod commands;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand};
use skypattern_core::eval::DEFAULT_EVAL_EL_BIN_DEG;
use skypattern_core::geometry::DEFAULT_ORIENTATION_TOL_DEG;
use skypattern_core::pattern::{
    DEFAULT_AZ_BIN_DEG, DEFAULT_COMPLETION_TOL_DB, DEFAULT_EL_BIN_DEG, DEFAULT_K_MIN,
    DEFAULT_MAX_ITERS,
};

#[derive(Debug, Parser)]
#[command(name = "skypattern", version, about, propagate_version = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic flight log over a known pattern.
    Simulate(SimulateArgs),
    /// Learn a completed combined pattern from one or more flight logs.
    Learn(LearnArgs),
    /// Fill the missing cells of a pattern grid.
    Complete(CompleteArgs),
    /// Predict received power for every sample of a flight log.
    Predict(PredictArgs),
    /// Predict, then report MAE, error CDF and per-elevation error.
    Evaluate(EvaluateArgs),
    /// Rebuild reports and plots from residual files.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Trajectory description (JSON).
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Ground-station configuration (JSON).
    #[arg(long)]
    pub station: PathBuf,
    /// Truth pattern description (JSON).
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub noise_sigma_db: f64,
    /// Noise seed; overrides the trajectory's `rng_seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct BinArgs {
    #[arg(long, default_value_t = DEFAULT_AZ_BIN_DEG)]
    pub az_bin_deg: f64,
    #[arg(long, default_value_t = DEFAULT_EL_BIN_DEG)]
    pub el_bin_deg: f64,
}

#[derive(Debug, Args)]
pub struct LearnArgs {
    /// Training flight log; repeat to merge several flights.
    #[arg(long = "log", required = true)]
    pub logs: Vec<PathBuf>,
    #[arg(long)]
    pub station: PathBuf,
    #[command(flatten)]
    pub bins: BinArgs,
    #[arg(long, default_value_t = DEFAULT_K_MIN)]
    pub k_min: u64,
    #[arg(long, default_value_t = DEFAULT_COMPLETION_TOL_DB)]
    pub tol_db: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long, default_value_t = DEFAULT_ORIENTATION_TOL_DEG)]
    pub orientation_tol_deg: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct CompleteArgs {
    #[arg(long)]
    pub grid: PathBuf,
    /// Demote bins with fewer samples than this before completing.
    #[arg(long)]
    pub k_min: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_COMPLETION_TOL_DB)]
    pub tol_db: f64,
    #[arg(long, default_value_t = DEFAULT_MAX_ITERS)]
    pub max_iters: usize,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    /// Test flight log.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub station: PathBuf,
    /// Completed combined pattern.
    #[arg(long, required_unless_present = "uav_pattern")]
    pub grid: Option<PathBuf>,
    /// Anechoic UAV pattern for the two-pattern baseline.
    #[arg(long, requires = "gs_pattern")]
    pub uav_pattern: Option<PathBuf>,
    /// Anechoic ground-station pattern for the two-pattern baseline.
    #[arg(long, requires = "uav_pattern")]
    pub gs_pattern: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_ORIENTATION_TOL_DEG)]
    pub orientation_tol_deg: f64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Test flight log.
    #[arg(long)]
    pub log: PathBuf,
    #[arg(long)]
    pub station: PathBuf,
    /// Completed combined pattern.
    #[arg(long)]
    pub grid: PathBuf,
    /// Anechoic UAV pattern; with --gs-pattern, also evaluates the baseline.
    /// Defaults to the station configuration's pattern paths.
    #[arg(long, requires = "gs_pattern")]
    pub uav_pattern: Option<PathBuf>,
    #[arg(long, requires = "uav_pattern")]
    pub gs_pattern: Option<PathBuf>,
    /// Elevation bin width of the error profile.
    #[arg(long, default_value_t = DEFAULT_EVAL_EL_BIN_DEG)]
    pub el_bin_deg: f64,
    #[arg(long, default_value_t = DEFAULT_ORIENTATION_TOL_DEG)]
    pub orientation_tol_deg: f64,
    /// Test-set name for the comparison table; defaults to the log's file stem.
    #[arg(long)]
    pub test_label: Option<String>,
    /// Training-set name for the comparison table.
    #[arg(long, default_value = "train")]
    pub train_label: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Residual file; give two to also compare them.
    #[arg(long = "residuals", required = true, num_args = 1, action = clap::ArgAction::Append)]
    pub residuals: Vec<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EVAL_EL_BIN_DEG)]
    pub el_bin_deg: f64,
    #[arg(long, default_value = "test")]
    pub test_label: String,
    #[arg(long, default_value = "train")]
    pub train_label: String,
    #[arg(long)]
    pub out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Command::Report(r) = &cli.command {
        if r.residuals.len() > 2 {
            Cli::command()
                .error(
                    clap::error::ErrorKind::TooManyValues,
                    "--residuals accepts at most two files",
                )
                .exit();
        }
    }
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SKYPATTERN_LOG", "warn"))
        .format_timestamp(None)
        .init();

    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Learn(a) => commands::learn(a),
        Command::Complete(a) => commands::complete(a),
        Command::Predict(a) => commands::predict(a),
        Command::Evaluate(a) => commands::evaluate(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(1)
        }
    }
}
