//! Command-line front end.

pub mod config;
mod pipeline;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};

pub use config::{Config, KNOWN_KEYS};
pub use pipeline::{cmd_calibrate, cmd_evaluate, cmd_experiment, cmd_monitor, cmd_predict};

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "CONFORMAL_KIT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "conformal-kit", version, about = "Conformal prediction experiments")]
pub struct Cli {
    /// Overrides the seed of the config file (or of the recipe).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and write calibration.csv and meta.csv.
    Calibrate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write predictions.csv for the rows of a test file.
    Predict {
        #[arg(long)]
        config: PathBuf,
        /// Directory holding calibration.csv.
        #[arg(long)]
        calibration: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Score predictions.csv against true responses; writes report.csv.
    Evaluate {
        #[arg(long)]
        predictions: PathBuf,
        /// CSV with a `y` (regression) or `label` (classification) column.
        #[arg(long)]
        truths: PathBuf,
        /// CSV with a `class` column for per-class coverage.
        #[arg(long)]
        classes: Option<PathBuf>,
        /// Level used for the relative width of regression bands.
        #[arg(long, default_value_t = 0.1)]
        alpha: f64,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run a named recipe and write its tables plus README.md.
    Experiment {
        recipe: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Run an exchangeability martingale over a score stream; writes monitor.csv.
    Monitor {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        calibration: PathBuf,
        /// CSV with a `score` column.
        #[arg(long)]
        stream: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
}

/// Parses the thread cap; `None` when the variable is unset or empty.
pub fn thread_cap(raw: Option<&str>) -> Result<Option<usize>> {
    match raw.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => match v.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::config(THREADS_ENV, format!("expected a positive integer, got `{v}`"))),
        },
    }
}

fn init_threads() -> Result<()> {
    let raw = std::env::var(THREADS_ENV).ok();
    if let Some(n) = thread_cap(raw.as_deref())? {
        // a pool built earlier in the process keeps its size
        if rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            log::debug!("global thread pool already initialised");
        }
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<()> {
    init_threads()?;
    match cli.command {
        Command::Calibrate { config, out } => cmd_calibrate(&config, &out, cli.seed),
        Command::Predict {
            config,
            calibration,
            test,
            out,
        } => cmd_predict(&config, &calibration, &test, &out, cli.seed),
        Command::Evaluate {
            predictions,
            truths,
            classes,
            alpha,
            out,
        } => {
            if !(alpha > 0.0 && alpha < 1.0) {
                return Err(Error::config("--alpha", format!("{alpha} is not in (0, 1)")));
            }
            cmd_evaluate(&predictions, &truths, classes.as_deref(), &out, alpha)
        }
        Command::Experiment { recipe, out } => cmd_experiment(&recipe, &out, cli.seed.unwrap_or(0)),
        Command::Monitor {
            config,
            calibration,
            stream,
            out,
        } => cmd_monitor(&config, &calibration, &stream, &out, cli.seed),
    }
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
