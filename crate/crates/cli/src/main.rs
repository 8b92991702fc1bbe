use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;
use minbo_cli::commands::{cmd_estimate, cmd_simulate, cmd_validate, default_threads, simulate_out_dir};
use minbo_cli::config::{load_config, Config};
use minbo_cli::CliError;

#[derive(Parser)]
#[command(name = "minbo", version, about = "Information borrowing from multiple secondary datasets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo study and write one summary table per cell.
    Simulate {
        config: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit the MLE and every configured scheme to CSV data.
    Estimate {
        config: PathBuf,
        /// Report file; `.csv` or `.json` selects the format.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a config and its data without fitting.
    Validate { config: PathBuf },
}

fn run(cli: Cli) -> Result<bool, CliError> {
    match cli.command {
        Command::Simulate { config, threads, out } => {
            let Config::Simulate(cfg) = load_config(&config)? else {
                return Err(CliError::Config("simulate needs a [simulation] config".into()));
            };
            let threads = threads.unwrap_or_else(default_threads);
            let dir = simulate_out_dir(&cfg, out);
            let manifest = cmd_simulate(&cfg, threads, &dir)?;
            for c in &manifest.cells {
                match &c.error {
                    Some(e) => error!("{}: {e}", c.name),
                    None => eprintln!(
                        "{}: {} replicates, {} failed, {:.1}s",
                        c.name, c.replicates, c.failures, c.wall_time_seconds
                    ),
                }
            }
            Ok(manifest.succeeded())
        }
        Command::Estimate { config, out } => {
            let Config::Analysis(cfg) = load_config(&config)? else {
                return Err(CliError::Config("estimate needs a [main] config".into()));
            };
            cmd_estimate(&cfg, out.as_deref())?;
            Ok(true)
        }
        Command::Validate { config } => {
            for line in cmd_validate(&load_config(&config)?)? {
                println!("{line}");
            }
            println!("ok");
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            let obj = serde_json::to_string(&e.to_object()).expect("plain strings");
            eprintln!("{obj}");
            ExitCode::FAILURE
        }
    }
}
