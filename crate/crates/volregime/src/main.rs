use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use volregime::config::ExperimentConfig;
use volregime::runner::{self, Overrides};

/// Regime-aware volatility forecasting: classical baselines and
/// in-context-learning methods over daily price data.
#[derive(Parser)]
#[command(name = "volregime", version, about)]
struct Cli {
    /// Experiment configuration file.
    #[arg(long, global = true, default_value = "experiment.toml")]
    config: PathBuf,
    /// Overrides the seed relevant to the subcommand.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the model backend: remote, mock:echo, mock:cheating_oracle,
    /// mock:corrective, or mock:constant:<value>.
    #[arg(long, global = true)]
    backend: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the price file, derive returns and windows, and persist the
    /// derived-data artifact.
    Ingest,
    /// Build the demonstration pool from the training split.
    BuildPool,
    /// Backtest every configured method and write report.csv / report.md.
    Evaluate,
    /// Re-render the Markdown table from an existing report.csv.
    Report,
}

fn run(cli: Cli) -> Result<(), Box<dyn std::error::Error>> {
    let config = ExperimentConfig::load(&cli.config)?;
    let overrides = Overrides { seed: cli.seed, backend: cli.backend };
    match cli.command {
        Command::Ingest => {
            runner::cmd_ingest(&config)?;
        }
        Command::BuildPool => {
            runner::cmd_build_pool(&config, &overrides)?;
        }
        Command::Evaluate => {
            let outcome = runner::cmd_evaluate(&config, &overrides)?;
            if !outcome.failures.is_empty() {
                return Err(format!("{} method(s) failed", outcome.failures.len()).into());
            }
        }
        Command::Report => {
            runner::cmd_report(&config)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
