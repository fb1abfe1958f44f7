//! Config-driven runner for counting-based entropy estimates along
//! expanding leaf directions.
//!
//! Subcommands: `estimate` (one run), `sweep` (Cartesian grid, resumable),
//! `verify` (property suites), `oracle` (ground-truth dumps at small n).
//! Exit codes: 0 success, 1 property violation, 2 config error, 3 resource
//! budget or other runtime failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod artifacts;
mod commands;
mod config;
mod context;
mod error;

#[derive(Parser)]
#[command(name = "uent", version, about = "Entropy estimates from leafwise cover and cell counts")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one estimate: counts per (anchor, n, scale) plus fitted slopes.
    Estimate(CommonArgs),
    /// Run a Cartesian grid of estimates with resumable per-task results.
    Sweep(CommonArgs),
    /// Run the property suites applicable to the configured system.
    Verify(VerifyArgs),
    /// Dump refined cells, minimal counts, and cover minima at small n.
    Oracle(OracleArgs),
}

#[derive(Args)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides run.out_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed override.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for sweep tasks; overrides run.workers.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Refinement budget override.
    #[arg(long)]
    pub budget: Option<u64>,
}

#[derive(Args)]
pub struct VerifyArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Fault-injection hook: scales leafwise distances inside the metric
    /// suites. Anything other than 1 must be reported as a violation.
    #[arg(long, hide = true, default_value_t = 1.0)]
    pub corrupt_leaf_metric: f64,
}

#[derive(Args)]
pub struct OracleArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Standalone cover instance (TOML); overrides oracle.cover_instance.
    #[arg(long)]
    pub cover_instance: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Estimate(args) => commands::estimate::run(args),
        Command::Sweep(args) => commands::sweep::run(args),
        Command::Verify(args) => commands::verify::run(args),
        Command::Oracle(args) => commands::oracle::run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
