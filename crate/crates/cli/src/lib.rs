//! Command-line front-end: reads an experiment configuration, runs one of the
//! experiments and writes CSV and JSON results.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::{AlgorithmChoice, Experiment, Overrides};
pub use error::{CliError, ConfigError};

#[derive(Debug, Parser)]
#[command(name = "nsrbm", version, about = "Exact simulation of reflected Brownian motion with time-varying coefficients")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML configuration; defaults describe the cosine-drift experiment.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,

    #[arg(long, global = true, value_name = "N")]
    pub workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[arg(long, global = true, value_enum)]
    pub algorithm: Option<AlgorithmChoice>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Draw replications and write samples.csv and summary.json.
    Sample,
    /// Kolmogorov-Smirnov comparison of the exact maximum with the discretization.
    Compare,
    /// Recommend a warm-up length for a given total-variation tolerance.
    PlanWarmup,
    /// RMSE against computational budget for the exact method and the discretization.
    Convergence,
}

/// Loads the configuration named on the command line.
pub fn load(cli: &Cli) -> Result<Experiment, CliError> {
    let text = match &cli.config {
        Some(path) => fs::read_to_string(path).map_err(|e| CliError::io(path, e))?,
        None => String::new(),
    };
    let overrides = Overrides {
        seed: cli.seed,
        workers: cli.workers,
        out: cli.out.clone(),
        algorithm: cli.algorithm,
    };
    Experiment::parse(&text, &overrides)
}

/// Runs the selected experiment and returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    let exp = load(cli)?;
    match cli.command {
        Command::Sample => commands::run_sample(&exp),
        Command::Compare => commands::run_compare(&exp),
        Command::PlanWarmup => commands::run_plan_warmup(&exp),
        Command::Convergence => commands::run_convergence(&exp),
    }
}
