//! Experiment runner around `cme-core`: dataset generation, density-model
//! training and evaluation, and RL runs, all driven by flat TOML configs with
//! flag overrides. Every artifact is a deterministic function of
//! (config, seed).

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod csvio;
pub mod runs;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

/// Errors carry their process exit code: 2 config, 3 numerical, 4 IO.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("io error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn io(context: impl std::fmt::Display, err: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }

    /// Core errors map to exit codes: only genuine numerical failures are
    /// distinguished from configuration mistakes.
    pub fn from_core(err: cme_core::Error) -> Self {
        match err {
            cme_core::Error::Numerical(_) | cme_core::Error::Optimizer(_) => {
                CliError::Numerical(err.to_string())
            }
            _ => CliError::Config(err.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(
    name = "cme",
    version,
    about = "Conditional mean embedding experiments: data, density models, RL"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a toy dataset CSV.
    GenData(GenDataArgs),
    /// Train a conditional density model (proposal or baseline).
    TrainDensity(TrainDensityArgs),
    /// Evaluate trained density bundles with WAS1 / QICE / RMSE.
    EvalDensity(EvalDensityArgs),
    /// Train a distributional or DQN agent on a classic-control task.
    TrainRl(TrainRlArgs),
}

#[derive(Args, Debug, Default)]
pub struct GenDataArgs {
    /// Flat TOML config file.
    #[arg(long)]
    pub config: Option<String>,
    /// Toy family: bimodal, skewed, or ring.
    #[arg(long)]
    pub family: Option<String>,
    /// Number of samples.
    #[arg(long)]
    pub n: Option<usize>,
    /// Generation seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV path.
    #[arg(long)]
    pub out: Option<String>,
    /// Extra key=value overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Default)]
pub struct TrainDensityArgs {
    /// Flat TOML config file.
    #[arg(long)]
    pub config: Option<String>,
    /// Training dataset CSV (from gen-data).
    #[arg(long)]
    pub data: Option<String>,
    /// Method: proposal_iterative, proposal_joint, proposal_fixed, df_med,
    /// df_fixed, or classical.
    #[arg(long)]
    pub method: Option<String>,
    /// Comma-separated seeds; one bundle per seed.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Single-seed shorthand.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; each run writes out/<run_id>/.
    #[arg(long)]
    pub out: Option<String>,
    /// Extra key=value overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Default)]
pub struct EvalDensityArgs {
    /// Flat TOML config file.
    #[arg(long)]
    pub config: Option<String>,
    /// Comma-separated run directories produced by train-density.
    #[arg(long)]
    pub bundles: Option<String>,
    /// Metrics: comma-separated subset of was1, qice, rmse.
    #[arg(long)]
    pub metrics: Option<String>,
    /// Toy family for WAS1 ground truth.
    #[arg(long)]
    pub family: Option<String>,
    /// Held-out dataset CSV for QICE / RMSE.
    #[arg(long)]
    pub data: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// Extra key=value overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Args, Debug, Default)]
pub struct TrainRlArgs {
    /// Flat TOML config file.
    #[arg(long)]
    pub config: Option<String>,
    /// Environment: cartpole, acrobot, or mountaincar.
    #[arg(long)]
    pub env: Option<String>,
    /// Loss mode: fuse, single, or dqn.
    #[arg(long)]
    pub loss: Option<String>,
    /// Bandwidth for the single-kernel loss.
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Total environment steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Comma-separated seeds; one run per seed.
    #[arg(long)]
    pub seeds: Option<String>,
    /// Single-seed shorthand.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<String>,
    /// Extra key=value overrides.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

/// Parses argv and runs the selected command, returning the process exit
/// code. Clap help/version requests exit 0.
pub fn run(args: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::GenData(args) => commands::gen_data::execute(&args),
        Command::TrainDensity(args) => commands::train_density::execute(&args),
        Command::EvalDensity(args) => commands::eval_density::execute(&args),
        Command::TrainRl(args) => commands::train_rl::execute(&args),
    };
    match result {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            err.exit_code()
        }
    }
}

/// Convenience for tests: run from string literals.
pub fn run_slice(args: &[&str]) -> i32 {
    let owned: Vec<String> = args.iter().map(|s| s.to_string()).collect();
    run(&owned)
}
