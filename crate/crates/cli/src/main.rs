//! Command-line runner: wires the generators, estimator panels, combiner,
//! and interval procedures into reproducible runs with machine-readable
//! outputs. Every run is a pure function of (config, seed) up to the
//! manifest timestamp.

mod commands;
mod config;
mod manifest;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

const EXIT_CONFIG: u8 = 2;
const EXIT_PIPELINE: u8 = 3;
const EXIT_INSTABILITY: u8 = 4;

#[derive(Parser)]
#[command(
    name = "ebpool",
    about = "Pool estimators of one causal target across identifying functionals",
    version
)]
struct Cli {
    /// Path to the run configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the scenario seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Worker threads for replicate-level parallelism (0 = all cores).
    /// Outputs are identical for any thread count.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,

    /// Override the replication count (coverage).
    #[arg(long, global = true)]
    reps: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One dataset, the full pooling chain, and all three intervals.
    SingleRun,
    /// Replicated coverage evaluation of a named scenario.
    Coverage,
    /// One split conformal fit and prediction interval.
    Conformal,
    /// Generate a dataset and write its CSV.
    GenData,
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    if cli.threads > 0 {
        // ignore failure: the global pool may already exist in tests
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global();
    }

    let Some(config_path) = &cli.config else {
        eprintln!("error: --config is required");
        return ExitCode::from(EXIT_CONFIG);
    };
    let mut file = match config::load(config_path) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    file.scenario.apply_overrides(cli.seed, cli.reps);

    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("config error: cannot create output directory: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }

    let result = match cli.command {
        Command::SingleRun => commands::single_run::run(&file.scenario, &cli.out),
        Command::Coverage => commands::coverage::run(&file.scenario, &cli.out),
        Command::Conformal => commands::conformal::run(&file.scenario, &cli.out),
        Command::GenData => commands::gen_data::run(&file.scenario, &cli.out),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(error: &ebpool::Error) -> u8 {
    use ebpool::Error::*;
    match error {
        AllSubsetsWeak | SubsampleInstability { .. } => EXIT_INSTABILITY,
        InvalidArgument(_) | Parse(_) => EXIT_CONFIG,
        _ => EXIT_PIPELINE,
    }
}
