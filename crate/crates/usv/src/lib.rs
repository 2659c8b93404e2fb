//! File formats, configuration and the `usv` command line around
//! `usv-core`.

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod plot;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use crate::commands::Common;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "usv", version, about = "Simulate, train and evaluate a small autonomous surface vessel")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config's `output`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Suppress the summary on stdout.
    #[arg(long)]
    pub quiet: bool,
    /// Worker threads for parallel work (default: all cores).
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one mission and write its trajectory, metrics and plot.
    Run(CommonArgs),
    /// Train a tabular Q-learning avoidance agent.
    Train(CommonArgs),
    /// Evaluate a trained Q-table greedily on fresh worlds.
    Eval {
        #[command(flatten)]
        common: CommonArgs,
        /// Q-table JSON; overrides the config's `table`.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Generate a labeled synthetic point-cloud dataset.
    Dataset(CommonArgs),
    /// Train and test the centroid classifier.
    Classify(CommonArgs),
    /// Plan a path through a world file.
    Plan(CommonArgs),
}

impl Command {
    pub fn common(&self) -> &CommonArgs {
        match self {
            Command::Run(c) | Command::Train(c) | Command::Dataset(c) | Command::Classify(c) | Command::Plan(c) => c,
            Command::Eval { common, .. } => common,
        }
    }
}

/// Runs a parsed command line and returns its summary.
pub fn execute(cli: &Cli) -> Result<Value, CliError> {
    let args = cli.command.common();
    let common = Common { config: args.config.clone(), seed: args.seed, out: args.out.clone() };
    let go = || match &cli.command {
        Command::Run(_) => commands::run(&common),
        Command::Train(_) => commands::train_cmd(&common),
        Command::Eval { table, .. } => commands::eval_cmd(&common, table.as_deref()),
        Command::Dataset(_) => commands::dataset_cmd(&common),
        Command::Classify(_) => commands::classify_cmd(&common),
        Command::Plan(_) => commands::plan_cmd(&common),
    };
    match args.jobs {
        Some(0) => Err(CliError::Config("--jobs must be >= 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Internal(e.to_string()))?
            .install(go),
        None => go(),
    }
}
