use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use inverse_erm::cli::{exit_code, run, Command};
use inverse_erm::config::ExperimentConfig;

#[derive(Parser)]
#[command(name = "inverse-erm", version, about = "Empirical risk minimization experiments for inverse problems")]
struct Args {
    #[command(subcommand)]
    command: Cmd,
    /// Experiment configuration (TOML, or JSON with a .json extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads; defaults to the machine's parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Draw observations and write them as CSV.
    Simulate,
    /// Fit the configured estimator to simulated observations.
    Estimate,
    /// Monte Carlo MISE over the sample sizes and a fitted rate exponent.
    Rates,
    /// Net cardinalities and operator norms over a delta grid.
    NetStats,
    /// Compare Monte Carlo MISE with the oracle bound.
    BoundCheck,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Some(path) = args.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(2);
    };
    let mut cfg = match ExperimentConfig::load(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    if let Some(seed) = args.seed {
        cfg.master_seed = seed;
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    if let Some(threads) = args.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot start {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    let command = match args.command {
        Cmd::Simulate => Command::Simulate,
        Cmd::Estimate => Command::Estimate,
        Cmd::Rates => Command::Rates,
        Cmd::NetStats => Command::NetStats,
        Cmd::BoundCheck => Command::BoundCheck,
    };
    match run(command, &cfg) {
        Ok(summary) => {
            println!("{}", serde_json::to_string_pretty(&summary["results"]).unwrap_or_default());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
