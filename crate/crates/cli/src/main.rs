//! `pmoe` — train, evaluate, and inspect multi-objective soft-sensor runs.
//!
//! Exit codes: 0 success, 1 solver-bench violations, 2 invalid
//! configuration, 3 data or artifact problems, 4 training divergence.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "pmoe", version, about = "Multi-objective soft-sensor toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write the run directory (checkpoint, metrics,
    /// weight trajectory, manifest).
    Train {
        /// Run configuration (TOML).
        config: PathBuf,
    },
    /// Evaluate a saved checkpoint on the config's test partition.
    Eval {
        /// Run configuration (TOML).
        config: PathBuf,
        /// Checkpoint file from a previous `train`.
        checkpoint: PathBuf,
    },
    /// Train every grid cell over several seeds and write a comparison
    /// table.
    Ablate {
        /// Run configuration (TOML); supplies the baseline every cell
        /// patches.
        config: PathBuf,
        /// Grid file (TOML): `seeds = [..]` plus `[[cells]]` tables.
        grid: PathBuf,
    },
    /// Stress the simplex solver against its convergence certificates and
    /// the brute-force oracle.
    SolverBench {
        /// Number of objectives (matrix dimension).
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// Number of random instances.
        #[arg(long, default_value_t = 100)]
        n: usize,
        /// Seed for the instance generator.
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Re-derive tidy plot tables (metric curves, weight trajectory,
    /// residual histogram) from a finished run directory.
    ExportPlots {
        /// Directory written by `train`.
        run_dir: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train { config } => commands::cmd_train(config),
        Command::Eval { config, checkpoint } => commands::cmd_eval(config, checkpoint),
        Command::Ablate { config, grid } => commands::cmd_ablate(config, grid),
        Command::SolverBench { k, n, seed } => commands::cmd_solver_bench(*k, *n, *seed),
        Command::ExportPlots { run_dir } => commands::cmd_export_plots(run_dir),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
