//! `agrocate`: ingest parcels and rasters into a per-cell dataset, fit the
//! DML effect model, report and interpret effects, and run simulations.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use agrocate::ErrorKind;
use clap::{Parser, Subcommand};

use config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "agrocate", version, about = "Crop diversification effects with double machine learning")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long = "trim-lo", global = true)]
    trim_lo: Option<f64>,
    #[arg(long = "trim-hi", global = true)]
    trim_hi: Option<f64>,
    #[arg(long = "output-dir", global = true)]
    output_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the per-cell dataset from parcels, environment and outcome tables.
    Ingest,
    /// Fit propensity, first-stage and final-stage models.
    Fit,
    /// Per-cell effect report and the average effect summary.
    Report {
        /// Keep only cells whose parcel coverage reaches the configured threshold.
        #[arg(long)]
        agricultural_only: bool,
    },
    /// Tree interpreter and per-covariate effect curves.
    Interpret {
        #[arg(long)]
        max_depth: Option<usize>,
    },
    /// Monte Carlo study on synthetic data.
    Simulate {
        /// Write one generated dataset instead of running replications.
        #[arg(long)]
        emit_dataset: bool,
        #[arg(long)]
        reps: Option<usize>,
    },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if let Some(e) = err.downcast_ref::<agrocate::Error>() {
        return match e.kind() {
            ErrorKind::Schema => 2,
            ErrorKind::NoOverlap => 3,
            ErrorKind::Numerical => 4,
            ErrorKind::Io => 5,
            ErrorKind::SingleClass => 6,
            ErrorKind::InvalidArgument => 1,
        };
    }
    match err.downcast_ref::<ConfigError>() {
        Some(ConfigError::Read { .. }) => 5,
        Some(_) => 2,
        None => 1,
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(k) = cli.folds {
        cfg.dml.folds = k;
    }
    if let Some(lo) = cli.trim_lo {
        cfg.dml.trim_lo = lo;
    }
    if let Some(hi) = cli.trim_hi {
        cfg.dml.trim_hi = hi;
    }
    if let Some(dir) = cli.output_dir {
        cfg.paths.output_dir = dir;
    }
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Fit => commands::fit(&cfg),
        Command::Report { agricultural_only } => commands::report(&cfg, agricultural_only),
        Command::Interpret { max_depth } => {
            if let Some(d) = max_depth {
                cfg.interpreter.max_depth = d;
            }
            commands::interpret(&cfg)
        }
        Command::Simulate { emit_dataset, reps } => commands::simulate(&cfg, emit_dataset, reps),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
