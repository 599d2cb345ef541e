//! `gfou`: simulation, estimation and verification for Ornstein-Uhlenbeck
//! processes driven by Gaussian noise.
//!
//! Exit codes: 0 success, 1 validation or domain error, 2 accuracy
//! (quadrature) failure, 3 I/O error.

mod commands;
mod output;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gfou::ErrorKind;

use crate::output::Format;

#[derive(Debug, Parser)]
#[command(name = "gfou", version, about = "Drift estimation for Ornstein-Uhlenbeck processes driven by Gaussian noise")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every command.
#[derive(Debug, Clone, Args)]
pub struct Common {
    /// Random seed (commands without randomness record it only)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output path; stdout when absent (a directory for mc-run)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output format
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Fbm,
    Subfbm,
    Bifbm,
    Gensubfbm,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// Covariance family
    #[arg(long, value_enum, required_unless_present = "model_json")]
    pub model: Option<Family>,
    /// Hurst parameter of the family
    #[arg(long = "H", required_unless_present = "model_json")]
    pub hurst: Option<f64>,
    /// Second parameter of bifbm and gensubfbm
    #[arg(long = "K")]
    pub k: Option<f64>,
    /// Model as a JSON file (needed for mixtures)
    #[arg(long, conflicts_with_all = ["model", "hurst", "k"])]
    pub model_json: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one Ornstein-Uhlenbeck trajectory (columns t, X, G)
    Simulate {
        #[command(flatten)]
        model: ModelArgs,
        /// Drift parameter
        #[arg(long)]
        theta: f64,
        /// Noise scale
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Horizon
        #[arg(long = "T")]
        horizon: f64,
        /// Number of grid steps
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate the drift from a trajectory file written by simulate
    Estimate {
        /// Trajectory file (CSV or JSON)
        #[arg(long)]
        input: PathBuf,
        /// Hurst exponent for the moment estimator; defaults to the model's
        #[arg(long = "H")]
        hurst: Option<f64>,
        /// True drift, recorded in the output only
        #[arg(long)]
        theta_true: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Check the remainder bound of the covariance on a grid
    CheckHypothesis {
        #[command(flatten)]
        model: ModelArgs,
        /// Horizon
        #[arg(long = "T")]
        horizon: f64,
        /// Number of grid steps
        #[arg(long)]
        n: usize,
        /// Excluded band around the axes and the diagonal, in cells
        #[arg(long, default_value_t = 1.0)]
        margin: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run the numerical checks of the auxiliary integral bounds
    VerifyLemmas {
        /// Hurst exponent for the default sweep
        #[arg(long = "H", default_value_t = 0.3)]
        hurst: f64,
        /// Sweep configuration (JSON); overrides --H
        #[arg(long)]
        config: Option<PathBuf>,
        /// Relative quadrature tolerance for the default sweep
        #[arg(long, default_value_t = 1e-6)]
        rel_tol: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Run a Monte Carlo experiment from a JSON configuration
    McRun {
        /// Experiment configuration (JSON)
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Print the asymptotic variance constants
    Constants {
        /// Hurst exponent
        #[arg(long = "H")]
        hurst: f64,
        /// Drift parameter
        #[arg(long)]
        theta: f64,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    pub fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::Estimate { common, .. }
            | Command::CheckHypothesis { common, .. }
            | Command::VerifyLemmas { common, .. }
            | Command::McRun { common, .. }
            | Command::Constants { common, .. } => common,
        }
    }
}

pub fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Validation => 1,
        ErrorKind::Accuracy => 2,
        ErrorKind::Io => 3,
    }
}

fn kind_name(kind: ErrorKind) -> &'static str {
    match kind {
        ErrorKind::Validation => "validation",
        ErrorKind::Accuracy => "accuracy",
        ErrorKind::Io => "io",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let format = cli.command.common().format;
    match commands::execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e.kind();
            let code = exit_code(kind);
            let mut err = std::io::stderr().lock();
            if format == Format::Json {
                let doc = serde_json::json!({ "error": kind_name(kind), "message": e.to_string(), "exit_code": code });
                let _ = writeln!(err, "{doc}");
            } else {
                let _ = writeln!(err, "error: {e}");
            }
            ExitCode::from(code)
        }
    }
}
