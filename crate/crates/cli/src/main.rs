use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use boggn_cli::commands::{cmd_compare, cmd_list_benchmarks, cmd_ratio_demo, cmd_run};
use boggn_cli::config::parse_config;
use boggn_cli::{CliError, OUTPUT_DIR_ENV};

/// Black-box optimization experiments with a density-ratio classifier
/// surrogate, a TPE/KDE baseline and random search.
#[derive(Parser)]
#[command(name = "boggn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the replicated runs described by a config file.
    Run {
        /// Path to the key-value config file.
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory (takes precedence over
        /// the BOGGN_OUTPUT_DIR environment variable).
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Aggregate run directories into per-iteration regret quantiles.
    Compare {
        /// Run directories produced by `boggn run`; all must share a
        /// benchmark.
        dirs: Vec<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Tabulate true vs estimated density ratios on the two-Gaussian study.
    RatioDemo {
        #[arg(long, default_value_t = 1.0 / 3.0)]
        gamma: f64,
        #[arg(long, default_value_t = 5000)]
        n_samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the shipped benchmark functions.
    ListBenchmarks,
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let raw = std::fs::read_to_string(&config)
                .map_err(|e| CliError::config(format!("cannot read {}: {e}", config.display())))?;
            let mut parsed = parse_config(&raw)?;
            if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
                parsed.output_dir = PathBuf::from(dir);
            }
            if let Some(dir) = output_dir {
                parsed.output_dir = dir;
            }
            cmd_run(&parsed, &raw)
        }
        Command::Compare { dirs, out } => {
            let bytes = cmd_compare(&dirs, out.as_deref())?;
            if out.is_none() {
                print!("{}", String::from_utf8_lossy(&bytes));
            }
            Ok(())
        }
        Command::RatioDemo {
            gamma,
            n_samples,
            seed,
            out,
        } => {
            let bytes = cmd_ratio_demo(gamma, n_samples, seed, out.as_deref())?;
            if out.is_none() {
                print!("{}", String::from_utf8_lossy(&bytes));
            }
            Ok(())
        }
        Command::ListBenchmarks => {
            print!("{}", cmd_list_benchmarks());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("boggn: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
