//! Batch driver for the `plevy` library: reads a TOML run configuration and
//! writes CSV and JSON results into an output directory.
//!
//! Exit codes: `0` success, `1` a verification check failed, `2` invalid
//! configuration, `3` solver or I/O failure during the run.
//!
//! Every JSON document carries `schema_version`. Keys appear in declaration
//! order and no file contains timestamps, so outputs are bitwise
//! reproducible from the configuration and seed.

// `!(x > 0.0)` is used on purpose to reject NaN alongside nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::RunConfig;

/// Version of every JSON and CSV layout written by the commands.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Invalid(plevy::Error),
    #[error(transparent)]
    Run(plevy::Error),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    /// A library error raised while validating inputs.
    pub fn invalid(e: plevy::Error) -> Self {
        CliError::Invalid(e)
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) => 2,
            CliError::Run(_) | CliError::Io(_) => 3,
        }
    }
}

impl From<plevy::Error> for CliError {
    fn from(e: plevy::Error) -> Self {
        CliError::Run(e)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "plevy",
    version,
    about = "Stochastic p-Laplace simulations with Lévy noise"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides `run.seed`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides `run.out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides `run.n_paths`.
    #[arg(long)]
    pub paths: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate an ensemble and write per-path norms plus energy statistics.
    Simulate(Common),
    /// Run the a-priori, Aldous, isometry and uniqueness checks.
    Verify(Common),
    /// Minimise the sample-average cost over the control basis.
    Optimize(Common),
    /// Measure convergence over a sweep of step sizes or truncation levels.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Comma-separated step sizes.
        #[arg(long, value_delimiter = ',', conflicts_with = "sweep_eps")]
        sweep_dt: Option<Vec<f64>>,
        /// Comma-separated small-jump cutoffs.
        #[arg(long, value_delimiter = ',')]
        sweep_eps: Option<Vec<f64>>,
    },
}

/// Outcome of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Passed,
    ChecksFailed,
}

impl Outcome {
    pub fn from_passed(passed: bool) -> Self {
        if passed {
            Outcome::Passed
        } else {
            Outcome::ChecksFailed
        }
    }

    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Passed => 0,
            Outcome::ChecksFailed => 1,
        }
    }
}

/// Loads the configuration, applies command-line overrides and runs the command.
pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    let common = match &cli.command {
        Command::Simulate(c) | Command::Verify(c) | Command::Optimize(c) => c,
        Command::Converge { common, .. } => common,
    };
    let mut cfg = RunConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.run.out_dir = out.clone();
    }
    if let Some(n) = common.paths {
        cfg.run.n_paths = n;
    }
    match &cli.command {
        Command::Simulate(_) => commands::simulate(&cfg),
        Command::Verify(_) => commands::verify(&cfg),
        Command::Optimize(_) => commands::optimize(&cfg),
        Command::Converge {
            sweep_dt,
            sweep_eps,
            ..
        } => {
            let sweep = match (sweep_dt, sweep_eps) {
                (Some(d), _) => commands::Sweep::Dt(d.clone()),
                (None, Some(e)) => commands::Sweep::Eps(e.clone()),
                (None, None) if !cfg.converge.dts.is_empty() => {
                    commands::Sweep::Dt(cfg.converge.dts.clone())
                }
                (None, None) if !cfg.converge.eps.is_empty() => {
                    commands::Sweep::Eps(cfg.converge.eps.clone())
                }
                (None, None) => {
                    return Err(CliError::Config(
                        "converge needs --sweep-dt, --sweep-eps, converge.dts or converge.eps"
                            .into(),
                    ))
                }
            };
            commands::converge(&cfg, sweep)
        }
    }
}
