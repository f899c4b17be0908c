//! `ddl`: doubly debiased Lasso from the command line.

mod commands;
mod error;
mod options;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{cmd_diagnose, cmd_fit, cmd_simulate, DiagnoseArgs, FitArgs, SimulateArgs};
use options::EstimatorFlags;

#[derive(Parser)]
#[command(name = "ddl", version, about = "Inference for high-dimensional linear models with hidden confounders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

#[derive(Subcommand)]
enum Command {
    /// Estimate coefficients with confidence intervals from a CSV file.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// Name of the response column.
        #[arg(long)]
        response: String,
        /// `all` or comma-separated predictor names.
        #[arg(long, default_value = "all")]
        targets: String,
        /// JSON estimator configuration; flags override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Seed of the cross-validation folds.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[command(flatten)]
        estimator: EstimatorFlags,
    },
    /// Run a Monte-Carlo study described by a JSON configuration.
    Simulate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Master seed of the study.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long, default_value_t = default_workers())]
        workers: usize,
        #[command(flatten)]
        estimator: EstimatorFlags,
    },
    /// Singular-value spectrum and spectral-transform diagnostics of a design.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        /// Column to exclude from the design.
        #[arg(long)]
        response: Option<String>,
        #[arg(long, default_value_t = 0.5)]
        rho: f64,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = match cli.command {
        Command::Fit { input, response, targets, config, out_dir, seed, workers, estimator } => cmd_fit(&FitArgs {
            input,
            response,
            targets,
            config,
            out_dir,
            seed,
            workers,
            estimator,
        }),
        Command::Simulate { config, out_dir, seed, reps, workers, estimator } => cmd_simulate(&SimulateArgs {
            config,
            out_dir,
            seed,
            reps,
            workers,
            estimator,
        }),
        Command::Diagnose { input, response, rho, out_dir } => cmd_diagnose(&DiagnoseArgs {
            input,
            response,
            rho,
            out_dir,
        }),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
