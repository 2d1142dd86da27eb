use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use edgepool::experiment::{self, ExperimentError, OccupancyFit, RunOptions};

/// Vehicular far-edge resource pooling simulator.
#[derive(Parser)]
#[command(name = "edgepool", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSVs plus a manifest into the output directory.
    Run {
        /// Scenario TOML, or a manifest.toml from an earlier run.
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<u32>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override a config value, e.g. `--set delay.jitter_ms=0.1`. Repeatable.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads (default: min(reps, cores)).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Fit occupancy and hourly arrival rates from parking and WiFi traces.
    Fit {
        #[arg(long)]
        parking: PathBuf,
        #[arg(long)]
        wifi: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Method::Truncated)]
        method: Method,
    },
    /// Summarize a run directory.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Truncated,
    Moments,
}

fn run(cli: Cli) -> Result<(), ExperimentError> {
    match cli.command {
        Command::Run { scenario, seed, reps, out, set, jobs } => {
            let opts = RunOptions { seed, repetitions: reps, overrides: set, jobs };
            let outcome = experiment::cmd_run(&scenario, &out, &opts)?;
            println!(
                "wrote {} ({} seeds, config {})",
                outcome.out_dir.display(),
                outcome.manifest.seeds.len(),
                outcome.manifest.config_hash
            );
        }
        Command::Fit { parking, wifi, out, method } => {
            let method = match method {
                Method::Truncated => OccupancyFit::Truncated,
                Method::Moments => OccupancyFit::Moments,
            };
            let r = experiment::cmd_fit(&parking, &wifi, &out, method)?;
            println!(
                "occupancy mu={:.2} sigma={:.2} min from {} stays ({} dropped); wrote {}",
                r.occupancy.mu,
                r.occupancy.sigma,
                r.samples,
                r.non_positive,
                out.display()
            );
        }
        Command::Report { out } => print!("{}", experiment::cmd_report(&out)?),
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("EDGEPOOL_LOG", "warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
