use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(name = "fi2vts", version, about = "Frequency-domain multivariate time series forecasting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// JSON experiment config.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Training/initialization seed; overrides `model.seed`.
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,

    /// Output directory (created if missing).
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    pub out: PathBuf,

    /// Train with seeds seed, seed+1, ..., seed+N-1 and summarize.
    #[arg(long, global = true, value_name = "N", default_value_t = 1)]
    pub repeats: usize,

    /// Threads for read-only evaluation passes.
    #[arg(long = "parallel-eval", global = true, value_name = "N", default_value_t = 1)]
    pub parallel_eval: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the configured series to `series.csv`.
    Generate,
    /// Train, keep the best-validation checkpoint, and score the test split.
    Train,
    /// Score a saved checkpoint on one split.
    Evaluate {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Defaults to `<out>/checkpoint.bin`.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
    },
    /// Forecast the horizon after the last lookback window to `forecast.csv`.
    Forecast {
        /// Defaults to `<out>/checkpoint.bin`.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        /// CSV whose last `lookback` rows are the input; defaults to the
        /// configured series.
        #[arg(long, value_name = "PATH")]
        input: Option<PathBuf>,
    },
    /// Kramers-Kronig residuals for the configured signal families.
    VerifyKkr,
    /// Time and allocation scaling of one residual block over lookback lengths.
    BenchScaling {
        /// Record a gradient tape during timing.
        #[arg(long)]
        with_grad: bool,
    },
    /// Parameter count with a per-module breakdown.
    Inspect,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
