//! `boustro`: plan boustrophedon leak searches from an a priori leak map.

mod commands;
mod error;
mod report;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Format;
use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(name = "boustro", version, about = "Multi-objective boustrophedon planner for leak search")]
struct Cli {
    /// Worker threads for candidate evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random leak map.
    Generate {
        /// Generator config (JSON); the reference tiers when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scenario file to write.
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize a Pareto front of plans and export it.
    Plan {
        scenario: PathBuf,
        /// MOCE config (JSON); defaults for every omitted field.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's rng_seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Format of the front table.
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
    /// Evaluate one plan analytically and, optionally, by simulation.
    Evaluate {
        /// Scenario file, or a report.json from `plan`.
        scenario: PathBuf,
        /// An exported plan file or a bare {counts, speeds} object.
        plan: PathBuf,
        /// Cross-check with this many Monte-Carlo samples.
        #[arg(long = "monte-carlo", value_name = "N")]
        monte_carlo: Option<u64>,
        /// Monte-Carlo seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Machine-readable output (csv prints the posterior table only).
        #[arg(long, value_enum)]
        format: Option<Format>,
    },
    /// Compare the optimized front with regularly spaced constant-speed paths.
    Compare {
        scenario: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Baseline sweep config (JSON).
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Also show both curves with the work shared by n vehicles.
        #[arg(long)]
        auvs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "csv")]
        format: Format,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Input("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::Generate { config, seed, out } => commands::generate(config.as_deref(), seed, &out),
        Command::Plan { scenario, config, seed, out, format } => {
            commands::plan(&scenario, config.as_deref(), seed, &out, format)
        }
        Command::Evaluate { scenario, plan, monte_carlo, seed, format } => {
            commands::evaluate_plan(&scenario, &plan, monte_carlo, seed, format)
        }
        Command::Compare { scenario, config, baseline, auvs, seed, out, format } => {
            commands::compare(&scenario, config.as_deref(), baseline.as_deref(), auvs, seed, &out, format)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BOUSTRO_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
