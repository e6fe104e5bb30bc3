//! Experiment driver behind the `kbrn` binary.

pub mod commands;
pub mod config;
pub mod csv;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use kbrn::cells::CellKind;

pub use config::ExperimentConfig;
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "kbrn", version, about = "Kernel-based recurrent network experiments")]
pub struct Cli {
    /// Print a template configuration and exit.
    #[arg(long, global = true)]
    pub print_default: bool,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output root; overrides `out_dir`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fill the `seconds` CSV columns with wall-clock times.
    #[arg(long)]
    pub timings: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write train/test JSON-lines files for the prefix task.
    Genbench(RunArgs),
    /// Train one model; writes model.json, history.csv and summary.json.
    Train(RunArgs),
    /// Compare BPTT against central finite differences.
    Gradcheck {
        #[arg(long, default_value = "kbrn")]
        cell: CellKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = kbrn::training::GRADCHECK_INSTANCES)]
        instances: usize,
    },
    /// Gradient-norm trace over a dataset and activation shapes of a model.
    Analyze {
        #[arg(long)]
        model: PathBuf,
        /// JSON-lines dataset file.
        #[arg(long)]
        data: PathBuf,
        /// Defaults to the model's directory.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = -3.0, allow_negative_numbers = true)]
        grid_lo: f64,
        #[arg(long, default_value_t = 3.0, allow_negative_numbers = true)]
        grid_hi: f64,
        #[arg(long, default_value_t = 121)]
        grid_n: usize,
    },
    /// Train every (T, cell) pair of the grid.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Worker threads for independent grid points.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
}

/// Runs the parsed command line, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn std::io::Write) -> Result<(), CliError> {
    if cli.print_default {
        writeln!(out, "{}", ExperimentConfig::default().to_pretty_json())?;
        return Ok(());
    }
    match cli.command {
        None => Err(CliError::Input("no command given (try --help)".into())),
        Some(Command::Genbench(a)) => commands::genbench(&load(&a)?, out),
        Some(Command::Train(a)) => commands::train(&load(&a)?, a.timings, out),
        Some(Command::Gradcheck { cell, seed, instances }) => commands::gradcheck(cell, seed, instances, out),
        Some(Command::Analyze {
            model,
            data,
            out: dir,
            grid_lo,
            grid_hi,
            grid_n,
        }) => commands::analyze(&model, &data, dir.as_deref(), (grid_lo, grid_hi, grid_n), out),
        Some(Command::Sweep { run, parallel }) => commands::sweep(&load(&run)?, parallel, run.timings, out),
    }
}

fn load(a: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &a.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(o) = &a.out {
        cfg.out_dir = o.clone();
    }
    Ok(cfg)
}
