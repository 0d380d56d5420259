//! Command-line driver: dataset generation, single-dataset estimation,
//! Monte Carlo experiments and variance-decomposition reports.

pub mod commands;
pub mod config;
pub mod json;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::config::{Config, Format};

#[derive(Debug, Parser)]
#[command(name = "gai", version, about = "Generative augmented inference for GLMs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured seed (and GAI_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for parallel trials and folds.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Fit the configured estimators on one dataset.
    Estimate,
    /// Run a Monte Carlo experiment.
    Simulate,
    /// Write a generated dataset to CSV.
    Gen,
    /// Estimate the variance-decomposition terms of a generator.
    Decompose,
}

/// An error with its process exit code: 2 configuration, 3 data, 4 numerical.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError { code: 2, message: msg.into() }
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError { code: 3, message: msg.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

/// Applies command-line and environment overrides; precedence is
/// `--seed`, then `GAI_SEED`, then the file.
pub fn resolve(cli: &Cli, env_seed: Option<&str>) -> Result<Config, CliError> {
    let mut config = match &cli.config {
        Some(p) => Config::load(p)?,
        None => return Err(CliError::config("missing --config <path>")),
    };
    if let Some(s) = env_seed {
        config.seed = s.trim().parse().map_err(|_| CliError::config(format!("GAI_SEED `{s}` is not an integer")))?;
    }
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    if let Some(o) = &cli.out {
        config.output.dir = o.clone();
    }
    if let Some(f) = cli.format {
        config.output.format = f;
    }
    Ok(config)
}

pub fn run(cli: &Cli, env_seed: Option<&str>) -> Result<(), CliError> {
    let config = resolve(cli, env_seed)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        pool = pool.num_threads(t);
    }
    let pool = pool.build().map_err(|e| CliError::config(format!("cannot start thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Estimate => commands::estimate(&config),
        Command::Simulate => commands::simulate(&config),
        Command::Gen => commands::gen(&config),
        Command::Decompose => commands::decompose(&config),
    })
}
