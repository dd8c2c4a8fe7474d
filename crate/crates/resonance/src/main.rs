//! Command-line entry point: run preset experiments from configuration files.
//!
//! Exit codes: 0 when every check in the run passed, 1 when a check failed,
//! 2 on configuration or runtime errors.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use resonance::config::ExperimentConfig;
use resonance::experiment;

#[derive(Parser)]
#[command(
    name = "resonance",
    version,
    about = "Periodic solutions of semilinear parabolic equations at resonance"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the preset experiment described by a configuration file.
    Run {
        /// Path to a `key = value` configuration file.
        config: PathBuf,
        /// Directory for artifacts (default: runs/<preset>).
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Override the configured random seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print the full run summary to stdout.
        #[arg(long)]
        verbose: bool,
    },
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::Run {
            config,
            output_dir,
            seed,
            verbose,
        } => run(&config, output_dir, seed, verbose),
    }
}

fn run(config: &Path, output_dir: Option<PathBuf>, seed: Option<u64>, verbose: bool) -> ExitCode {
    let cfg = match ExperimentConfig::from_file(config) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    };
    let dir = output_dir.unwrap_or_else(|| PathBuf::from("runs").join(&cfg.preset));
    match experiment::run(&cfg, &dir, seed) {
        Ok(artifacts) => {
            if verbose {
                print!("{}", artifacts.summary);
            }
            println!(
                "{}: {} files written to {}",
                if artifacts.passed { "PASS" } else { "FAIL" },
                artifacts.files.len(),
                artifacts.output_dir.display()
            );
            if artifacts.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(2)
        }
    }
}
