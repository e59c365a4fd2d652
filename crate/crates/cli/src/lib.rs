//! Command-line front end for the contact-classification statistics crate.

// Negated comparisons are deliberate: `!(x > 0.0)` rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod csvout;

use clap::{Parser, Subcommand};
use config::RunConfig;
use std::path::PathBuf;

/// Closed-form contact-classification statistics with a Monte Carlo oracle.
#[derive(Parser, Debug)]
#[command(name = "proxclass", version, about)]
pub struct Cli {
    /// Configuration file (INI-style sections; defaults used when omitted).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Base seed for every stochastic command (overrides the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,

    /// Monte Carlo trials per validation point (overrides the config file).
    #[arg(long, global = true)]
    pub trials: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Reproduce the classification tables as CSV.
    Tables,
    /// Export the missed-detection and audio ranging curves as CSV.
    Curves,
    /// Run every closed form against its reference value and the Monte
    /// Carlo oracle; nonzero exit on any failed check.
    Validate,
    /// Simulate one networked two-way ranging cycle.
    Protocol,
    /// Run the baseband delay-variance and multipath experiments.
    DspExperiment,
}

/// Exit codes: 0 success, 1 check failure, 2 configuration error, 3 I/O.
pub fn exit_code_for(err: &proxclass_core::Error) -> i32 {
    match err {
        proxclass_core::Error::Config(_) => 2,
        proxclass_core::Error::Io(_) => 3,
        _ => 1,
    }
}

pub fn execute(cli: &Cli) -> proxclass_core::Result<i32> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = cli.trials {
        cfg.trials = trials;
    }
    match cli.command {
        Command::Tables => {
            commands::cmd_tables(&cfg, &cli.out)?;
            Ok(0)
        }
        Command::Curves => {
            commands::cmd_curves(&cfg, &cli.out)?;
            Ok(0)
        }
        Command::Validate => {
            let failures = commands::cmd_validate(&cfg, &cli.out)?;
            Ok(if failures > 0 { 1 } else { 0 })
        }
        Command::Protocol => {
            commands::cmd_protocol(&cfg, &cli.out)?;
            Ok(0)
        }
        Command::DspExperiment => {
            commands::cmd_dsp_experiment(&cfg, &cli.out)?;
            Ok(0)
        }
    }
}
