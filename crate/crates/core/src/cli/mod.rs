//! Command-line front end: `simulate`, `fit` and `benchmark`.
//!
//! Exit codes: 0 on success, 2 for usage or configuration errors, 3 when a
//! run only partly completed.

mod benchmark;
mod fit;
pub mod io;
mod manifest;
mod simulate;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::{Error, Result};
use crate::estimators::Method;
use crate::hrf_basis::BasisKind;

pub use benchmark::{
    benchmark, run_benchmark, BenchmarkConfig, BenchmarkOutcome, BenchmarkResult, FoldScore,
    ENCODING_CSV, ENCODING_JSON, IDENTIFICATION_CSV, IDENTIFICATION_JSON, PARTIAL_FILE,
};
pub use fit::{fit, Dataset, FitOptions, FitReport, BETAS_FILE, DIAGNOSTICS_FILE, HRFS_FILE};
pub use manifest::{RunManifest, MANIFEST_FILE};
pub use simulate::{simulate, SimulateConfig, Truth, BOLD_BIN, BOLD_CSV, EVENTS_FILE, TRUTH_FILE};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PARTIAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "r1glm",
    version,
    about = "Joint HRF and activation estimation with rank-1 GLMs"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic dataset described by a JSON config.
    Simulate {
        config: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Write the signal as CSV instead of the binary matrix format.
        #[arg(long)]
        csv: bool,
    },
    /// Fit every voxel of a dataset directory.
    Fit {
        dataset: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value = "r1glm")]
        method: Method,
        #[arg(long, default_value = "3hrf")]
        basis: BasisKind,
        #[arg(long, default_value_t = 20)]
        fir_length: usize,
        #[arg(long, overrides_with = "no_qr")]
        qr: bool,
        #[arg(long)]
        no_qr: bool,
        #[arg(long, env = "R1GLM_JOBS", default_value_t = 0)]
        jobs: usize,
        /// Degree of the per-run polynomial drift regressors.
        #[arg(long, default_value_t = 3)]
        drift_order: usize,
        /// Repetition time; read from the dataset manifest when omitted.
        #[arg(long)]
        tr: Option<f64>,
    },
    /// Score the ten-method grid with leave-one-run-out folds.
    Benchmark {
        /// JSON config; the built-in defaults are used when omitted.
        config: Option<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, env = "R1GLM_JOBS", default_value_t = 0)]
        jobs: usize,
    },
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UndefinedScore(_) | Error::DegenerateTest(_) => EXIT_PARTIAL,
        _ => EXIT_USAGE,
    }
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Simulate { config, out, csv } => {
            let cfg = SimulateConfig::from_json(&fs::read_to_string(&config)?)?;
            simulate(&cfg, &out, csv)?;
            println!("wrote {} voxels to {}", cfg.n_voxels, out.display());
            Ok(EXIT_OK)
        }
        Command::Fit {
            dataset,
            out,
            method,
            basis,
            fir_length,
            qr: _,
            no_qr,
            jobs,
            drift_order,
            tr,
        } => {
            let options = FitOptions {
                method,
                basis,
                fir_length,
                qr: !no_qr,
                jobs,
                drift_order,
            };
            let report = fit(&dataset, &out, &options, tr)?;
            println!(
                "{}: {} voxels, {} converged, {} flagged, {} failed in {:.2} s",
                report.method,
                report.n_voxels,
                report.converged,
                report.flagged,
                report.failed,
                report.wall_time_s
            );
            Ok(EXIT_OK)
        }
        Command::Benchmark { config, out, jobs } => {
            let cfg = match config {
                Some(path) => BenchmarkConfig::from_json(&fs::read_to_string(path)?)?,
                None => BenchmarkConfig::default(),
            };
            let (complete, _) = benchmark(&cfg, &out, jobs)?;
            if complete {
                println!("wrote benchmark report to {}", out.display());
                Ok(EXIT_OK)
            } else {
                eprintln!(
                    "a method failed; partial results in {}",
                    out.join(PARTIAL_FILE).display()
                );
                Ok(EXIT_PARTIAL)
            }
        }
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
