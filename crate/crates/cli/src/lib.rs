//! Batch front end: TOML run configs in, CSV reports plus a metadata file
//! out.
//!
//! Exit codes: 0 success, 2 config error, 3 validation refusal,
//! 4 numerical failure.

pub mod commands;
pub mod config;
pub mod error;
pub mod report;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::{cmd_estimate, cmd_simulate, cmd_survival, Invocation, Outcome};
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "lmtp", version, about = "Longitudinal modified treatment policy estimation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Run configuration (TOML).
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads; defaults to the available cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Report directory; overrides the config's `output`.
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,

    /// Repeat for more detail (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Point estimates, intervals and positivity diagnostics for one or two policies.
    Estimate,
    /// Run a misspecification scenario matrix on a known DGP.
    Simulate,
    /// Cumulative incidence curves with pointwise and simultaneous bands.
    Survival,
}

/// Run a parsed command line. The thread pool must already be configured.
pub fn run(cli: &Cli) -> CliResult<Outcome> {
    let config = cli
        .config
        .clone()
        .ok_or_else(|| CliError::Config("--config is required".into()))?;
    let inv = Invocation {
        config,
        output: cli.output.clone(),
        threads: commands::pool_threads(),
    };
    match cli.command {
        Command::Estimate => cmd_estimate(&inv),
        Command::Simulate => cmd_simulate(&inv),
        Command::Survival => cmd_survival(&inv),
    }
}
