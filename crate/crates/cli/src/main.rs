//! `rotgpe`: command-line driver.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 solver failure,
//! 4 verification failure, 5 I/O error.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::ConfigError;

#[derive(Debug, Parser)]
#[command(name = "rotgpe", version, about = "P1 finite-element solver for the rotating Gross-Pitaevskii equation")]
pub struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set tau=0.05`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Output directory; takes precedence over the `out` key.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Time integration with diagnostics and snapshots.
    Run,
    /// Ground state by the normalized gradient flow.
    Groundstate,
    /// Convergence-order table of a benchmark case.
    Convergence(ConvergenceArgs),
    /// Mass and energy after a fixed number of BE and IRK steps per step size.
    Table1(Table1Args),
    /// Sampled check of the truncated cubic.
    #[command(name = "verify-fm")]
    VerifyFm(VerifyFmArgs),
    /// Pointwise check of the coefficient assumptions.
    #[command(name = "verify-assumptions")]
    VerifyAssumptions(VerifyAssumptionsArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum CaseName {
    Eigenmode,
    Manufactured,
    RitzLaplace,
    RitzRotating,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Kind {
    Space,
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum SchemeName {
    Irk,
    Be,
}

#[derive(Debug, Args)]
pub struct ConvergenceArgs {
    #[arg(long, value_enum)]
    pub case: CaseName,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    #[arg(long, value_enum, default_value = "space")]
    pub kind: Kind,
    #[arg(long, value_enum, default_value = "irk")]
    pub scheme: SchemeName,
    /// Coarsest cells per side (space) or the fixed mesh (time).
    #[arg(long)]
    pub n: Option<usize>,
    /// Time step of a space study; defaults to the square of the finest cell width.
    #[arg(long)]
    pub tau: Option<f64>,
    /// Largest step of a time study, halved per level.
    #[arg(long, default_value_t = 0.2)]
    pub tau0: f64,
    /// Horizon of the study; time studies default to 1.
    #[arg(long)]
    pub t_final: Option<f64>,
    /// Rotation of the `ritz-rotating` case.
    #[arg(long, default_value_t = 0.8)]
    pub omega: f64,
}

#[derive(Debug, Args)]
pub struct Table1Args {
    #[arg(long, value_delimiter = ',', default_value = "1,0.1,0.01,0.001")]
    pub taus: Vec<f64>,
    #[arg(long, default_value_t = 100)]
    pub steps: usize,
}

#[derive(Debug, Args)]
pub struct VerifyFmArgs {
    #[arg(long = "M")]
    pub m: f64,
    #[arg(long, default_value_t = 100_000)]
    pub samples: usize,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct VerifyAssumptionsArgs {
    #[arg(long, default_value_t = 1.01)]
    pub zeta1: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Solver(rotgpe_core::Error),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<rotgpe_core::Error> for CliError {
    fn from(e: rotgpe_core::Error) -> Self {
        match e {
            rotgpe_core::Error::Io(io) => CliError::Io(io),
            rotgpe_core::Error::InvalidParameter { .. } | rotgpe_core::Error::InvalidDomain(_) => {
                CliError::Usage(e.to_string())
            }
            other => CliError::Solver(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Usage(_) => 2,
            CliError::Solver(_) => 3,
            CliError::Verification(_) => 4,
            CliError::Io(_) => 5,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::dispatch(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
