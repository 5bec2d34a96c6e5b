//! Command-line front end: chain metrics, simulation campaigns, dependence
//! probability estimation, and model-versus-simulation reports.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use snc::harness::Policy;
use snc::model::W3Gamma;
use snc::theta::SynthesisMethod;

#[derive(Parser)]
#[command(
    name = "snc",
    version,
    about = "Sparse network coding: decoding-chain metrics, campaigns, and validation reports"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute chain metrics: expected transmissions, decoding and
    /// rank-increase curves.
    Model(ModelArgs),
    /// Run a seeded campaign of generation transfers.
    Simulate(SimulateArgs),
    /// Estimate dependence probabilities and refit the exponent slopes.
    FitTheta(FitThetaArgs),
    /// Compare chain metrics against campaign statistics.
    Compare(CompareArgs),
    /// Re-execute a command from a previously written manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum W3Mode {
    Continuous,
    Piecewise,
}

impl From<W3Mode> for W3Gamma {
    fn from(mode: W3Mode) -> Self {
        match mode {
            W3Mode::Continuous => W3Gamma::Continuous,
            W3Mode::Piecewise => W3Gamma::Piecewise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum PolicyArg {
    Fixed,
    Tsnc,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Self {
        match p {
            PolicyArg::Fixed => Policy::Fixed,
            PolicyArg::Tsnc => Policy::Tsnc,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SynthesisArg {
    Rejection,
    Constructed,
}

impl From<SynthesisArg> for SynthesisMethod {
    fn from(s: SynthesisArg) -> Self {
        match s {
            SynthesisArg::Rejection => SynthesisMethod::Rejection,
            SynthesisArg::Constructed => SynthesisMethod::Constructed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct ModelArgs {
    /// Generation size.
    #[arg(long)]
    k: u32,
    /// Packets combined per coded packet.
    #[arg(long)]
    w: u32,
    /// Field size exponent, GF(2^q).
    #[arg(long)]
    q: u8,
    /// Per-packet loss probability of the link.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Decoding-overhead window for the xi curve.
    #[arg(long, default_value_t = 30)]
    epsilon_max: u32,
    /// CSV of dependence probabilities to use instead of the fitted law.
    #[arg(long)]
    theta_table: Option<PathBuf>,
    /// Tail form of the w=3 exponent law.
    #[arg(long, value_enum, default_value_t = W3Mode::Continuous)]
    w3_gamma: W3Mode,
    /// Directory for metrics.json, xi_curve.csv, delta_curve.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct SimulateArgs {
    #[arg(long)]
    k: u32,
    /// Density for the fixed policy (defaults to the ladder base for tsnc).
    #[arg(long)]
    w: Option<u32>,
    #[arg(long)]
    q: u8,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    runs: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epsilon_max: u32,
    #[arg(long, value_enum, default_value_t = PolicyArg::Fixed)]
    policy: PolicyArg,
    /// Ascending density ladder for tsnc, e.g. --ladder 3,7,15.
    #[arg(long, value_delimiter = ',')]
    ladder: Option<Vec<u32>>,
    /// Expected-transmission bound that triggers a density step.
    #[arg(long, default_value_t = 1.1)]
    threshold: f64,
    /// Worker threads (defaults to available parallelism).
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for stats.json and curves.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct FitThetaArgs {
    #[arg(long)]
    q: u8,
    #[arg(long)]
    w: u32,
    /// Coverage grid; defaults to five values from max(12, 2w) in steps of 4.
    #[arg(long, value_delimiter = ',')]
    coverages: Option<Vec<u32>>,
    /// Sampled ranks per coverage (evenly spaced unless --full-grid).
    #[arg(long, default_value_t = 20)]
    ranks_per_coverage: u32,
    /// Independent state syntheses per grid point.
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    /// Probe vectors drawn per synthesized state.
    #[arg(long, default_value_t = 1)]
    probes_per_state: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SynthesisArg::Rejection)]
    synthesis: SynthesisArg,
    /// Sample every feasible rank instead of an evenly spaced subset.
    #[arg(long, default_value_t = false)]
    full_grid: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Directory for theta_table.csv, gamma_fit.csv, slopes.json.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct CompareArgs {
    /// Existing metrics.json (otherwise computed inline from --k/--w/--q).
    #[arg(long)]
    model_json: Option<PathBuf>,
    /// Existing stats.json (otherwise simulated inline).
    #[arg(long)]
    sim_json: Option<PathBuf>,
    #[arg(long)]
    k: Option<u32>,
    #[arg(long)]
    w: Option<u32>,
    #[arg(long)]
    q: Option<u8>,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    runs: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 30)]
    epsilon_max: u32,
    #[arg(long)]
    theta_table: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = W3Mode::Continuous)]
    w3_gamma: W3Mode,
    #[arg(long)]
    threads: Option<usize>,
    /// Pass bound on |model mean - sim mean| / sim mean.
    #[arg(long, default_value_t = 0.008)]
    max_mean_rel_err: f64,
    /// Pass bound on the rank-increase curve MSE.
    #[arg(long, default_value_t = 4e-4)]
    max_delta_mse: f64,
    /// Pass bound on the decoding-probability curve MSE.
    #[arg(long, default_value_t = 2e-4)]
    max_xi_mse: f64,
    /// Directory for report.json and report.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
struct RerunArgs {
    /// Manifest written by a previous invocation.
    #[arg(long)]
    manifest: PathBuf,
}

/// Exit codes: 0 success, 2 parameter error, 3 tolerance failure in compare,
/// 4 internal model error.
pub(crate) enum CliError {
    Parameter(String),
    ToleranceFailed(String),
    Internal(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Parameter(_) => 2,
            CliError::ToleranceFailed(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Parameter(m) | CliError::ToleranceFailed(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<snc::Error> for CliError {
    fn from(e: snc::Error) -> Self {
        match e {
            snc::Error::ModelConstruction(_)
            | snc::Error::TransmissionCap { .. }
            | snc::Error::Synthesis { .. } => CliError::Internal(e.to_string()),
            _ => CliError::Parameter(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Parameter(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Parameter(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Model(args) => commands::cmd_model(&args),
        Command::Simulate(args) => commands::cmd_simulate(&args),
        Command::FitTheta(args) => commands::cmd_fit_theta(&args),
        Command::Compare(args) => commands::cmd_compare(&args),
        Command::Rerun(args) => commands::cmd_rerun(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
