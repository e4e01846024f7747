//! `se3flow`: synthesize rigid RGB-D scenes, estimate dense SE(3) scene
//! flow, score estimates, and verify the build's numerical invariants.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use se3flow_cli::commands::{self, RunOverrides};
use se3flow_cli::config::ScaleInitChoice;
use se3flow_cli::selfcheck;

#[derive(Parser)]
#[command(name = "se3flow", version, about = "Dense SE(3) scene-flow estimation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic rigid scene directory with ground truth.
    Synth {
        /// Scene configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the scene seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate scene flow for a configured frame pair.
    Run {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Override the operator and encoder seeds.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scale count (3 or 4).
        #[arg(long)]
        scales: Option<u32>,
        /// Override the update operator: reference, oracle, or weights:<path>.
        #[arg(long)]
        operator: Option<String>,
        /// Disable motion-embedding smoothing.
        #[arg(long)]
        no_smoothing: bool,
        /// Override the scale-transition strategy.
        #[arg(long, value_parser = ScaleInitChoice::parse)]
        scale_init: Option<ScaleInitChoice>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimate directory against a generated scene directory.
    Eval {
        /// Directory written by `run`.
        #[arg(long)]
        est: PathBuf,
        /// Scene directory written by `synth`.
        #[arg(long)]
        gt: PathBuf,
        /// Report file (default: <est>/report.txt).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the numerical invariant suite.
    Selfcheck,
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Synth { config, seed, out } => {
            commands::synth(&config, seed, &out)?;
            Ok(true)
        }
        Command::Run { config, seed, scales, operator, no_smoothing, scale_init, out } => {
            let overrides = RunOverrides { seed, scales, operator, no_smoothing, scale_init };
            commands::run(&config, &overrides, &out)?;
            Ok(true)
        }
        Command::Eval { est, gt, out } => {
            commands::eval(&est, &gt, out.as_deref())?;
            Ok(true)
        }
        Command::Selfcheck => Ok(selfcheck::run_all()),
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
