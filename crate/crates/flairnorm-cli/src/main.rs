//! `flairnorm`: batch intensity standardization, mask fusion and
//! evaluation for multicentre FLAIR MRI.
//!
//! Exit codes: 0 when everything succeeded, 1 on usage or fatal errors,
//! 2 when a batch finished with per-file failures. Batch commands never
//! abort because one file is bad; failures land in the run manifest.
//! `FLAIRNORM_LOG` controls the log level (error/warn/info/debug/trace).

mod commands;
mod manifest;
mod pairing;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "flairnorm",
    version,
    about = "Intensity standardization and evaluation toolkit for multicentre FLAIR MRI"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Standardize volumes with one of the five preprocessing variants
    Normalize(commands::normalize::NormalizeArgs),
    /// Train a Nyul landmark scale from a set of volumes
    TrainNyul(commands::train_nyul::TrainNyulArgs),
    /// Score predicted lesion masks against ground truth
    Evaluate(commands::evaluate::EvaluateArgs),
    /// Fuse 2+ lesion masks by pixel-wise majority vote
    Ensemble(commands::ensemble::EnsembleArgs),
    /// Histogram-alignment report (KL divergence) plus significance tests
    Report(commands::report::ReportArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLAIRNORM_LOG", "warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let is_help = matches!(
                err.kind(),
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion
            );
            let _ = err.print();
            std::process::exit(if is_help { 0 } else { 1 });
        }
    };

    let result = match cli.command {
        Command::Normalize(args) => commands::normalize::run(args),
        Command::TrainNyul(args) => commands::train_nyul::run(args),
        Command::Evaluate(args) => commands::evaluate::run(args),
        Command::Ensemble(args) => commands::ensemble::run(args),
        Command::Report(args) => commands::report::run(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            std::process::exit(1);
        }
    }
}
