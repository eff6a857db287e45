//! `tauw`: simulate, fit, evaluate and study timeseries-aware uncertainty
//! wrappers from the command line.

mod commands;
mod output;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "tauw", version, about = "Timeseries-aware uncertainty wrapper pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate train, calibration and test datasets from a scenario config.
    Simulate(SimulateArgs),
    /// Fit and calibrate the stateless and timeseries-aware models.
    Fit(FitArgs),
    /// Score one evaluation condition on a test dataset.
    Evaluate(EvaluateArgs),
    /// Refit the timeseries-aware model for all 16 factor subsets.
    Importance(ImportanceArgs),
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Scenario config, TOML or JSON (chosen by extension).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Clone)]
pub struct QimArgs {
    #[arg(long, default_value_t = 8)]
    pub max_depth: usize,
    /// Minimum calibration records per leaf.
    #[arg(long, default_value_t = 200)]
    pub min_leaf: u64,
    #[arg(long, default_value_t = 0.999)]
    pub confidence: f64,
    /// Length of the windows training series are cut into; 0 keeps whole series.
    #[arg(long, default_value_t = 10)]
    pub window: usize,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub cal: PathBuf,
    #[command(flatten)]
    pub qim: QimArgs,
    /// Timeseries-aware factors, comma separated; "" for none.
    #[arg(long, default_value = "ratio,length,size,certainty")]
    pub taqf: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FusionFlag {
    None,
    If,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum UfFlag {
    None,
    Naive,
    Opportune,
    Worstcase,
    Tauw,
}

#[derive(Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub test: PathBuf,
    /// Directory holding stateless.json and tauw.json.
    #[arg(long)]
    pub models: PathBuf,
    #[arg(long, value_enum, default_value_t = FusionFlag::If)]
    pub fusion: FusionFlag,
    #[arg(long, value_enum, default_value_t = UfFlag::Tauw)]
    pub uf: UfFlag,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct ImportanceArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub cal: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Fitted stateless model; fitted from train and cal when omitted.
    #[arg(long)]
    pub stateless: Option<PathBuf>,
    #[command(flatten)]
    pub qim: QimArgs,
    #[arg(long)]
    pub out: PathBuf,
}

/// Bad flags, configs or input files.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> u8 {
    use tauw_core::Error;
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<Error>() {
            return match core {
                Error::Domain(_) | Error::Parse { .. } => 2,
                Error::CalibrationInfeasible { .. } => 3,
                Error::SchemaMismatch(_) => 4,
                Error::Io(_) | Error::Json(_) => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(&args),
        Command::Fit(args) => commands::fit(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Importance(args) => commands::importance(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = exit_code(&err);
            if code == 2 {
                eprintln!("\nFor more information, try '--help'.");
            }
            ExitCode::from(code)
        }
    }
}
