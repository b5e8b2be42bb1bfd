//! Command-line front end for the bullseye cavity solver and optimizer.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod output;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Exit codes. Every termination path of [`run`] maps to one of these.
pub mod exit {
    pub const OK: i32 = 0;
    /// Bad flags, configuration or geometry.
    pub const CONFIG: i32 = 2;
    /// The solver or optimizer failed, or the process panicked.
    pub const SOLVER: i32 = 3;
    /// Reading inputs or writing outputs failed, including a locked directory
    /// and a failed post-run audit.
    pub const IO: i32 = 4;
}

pub const OUT_ENV: &str = "CAVITY_FORGE_OUT";
pub const DEFAULT_OUT: &str = "cavity-forge-out";

#[derive(Debug, Parser)]
#[command(name = "cavity-forge", version, about = "Bullseye cavity mode solver and inverse design")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $CAVITY_FORGE_OUT, then ./cavity-forge-out).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for gradient probes and tolerance cells; results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Recorded in manifests; no command currently draws random numbers.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Trace CSV of an interrupted `optimize` run to continue.
    #[arg(long, global = true)]
    pub resume: Option<PathBuf>,
    /// Built-in geometry: `bullseye` or `published`.
    #[arg(long, global = true, conflicts_with = "geometry")]
    pub template: Option<String>,
    /// Geometry document to load instead of a template.
    #[arg(long, global = true)]
    pub geometry: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set gme.gmax=4.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one geometry and write its mode summary, channels and far field.
    Simulate,
    /// Run the staged gradient descent.
    Optimize(OptimizeArgs),
    /// Single-parameter fabrication tolerance sweep.
    Tolerance(ToleranceArgs),
    /// Collection efficiency against numerical aperture.
    Collection(CollectionArgs),
    /// Interpolated far-field intensity on a square grid.
    Farfield(FarfieldArgs),
    /// Parse and check the configuration and geometry, then print the resolved configuration.
    ValidateConfig,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Reduced cutoff and a single 10-epoch stage.
    #[arg(long)]
    pub smoke: bool,
    /// Total epochs, split over the configured stages.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Stop after recording this epoch, leaving a resumable checkpoint.
    #[arg(long)]
    pub halt_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ToleranceArgs {
    /// `start:stop:step` or `[a, b, ...]`, in nm.
    #[arg(long, allow_hyphen_values = true)]
    pub deltas: Option<String>,
    /// Comma-separated parameter names, e.g. `w1,w2,r0`.
    #[arg(long)]
    pub params: Option<String>,
    #[arg(long)]
    pub na: Option<f64>,
}

#[derive(Debug, Args)]
pub struct CollectionArgs {
    /// `start:stop:step` or `[a, b, ...]`.
    #[arg(long)]
    pub na_grid: Option<String>,
}

#[derive(Debug, Args)]
pub struct FarfieldArgs {
    #[arg(long)]
    pub resolution: Option<usize>,
}

/// A failure carrying its exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn config(m: impl ToString) -> Self {
        Self { code: exit::CONFIG, message: m.to_string() }
    }
    pub fn solver(m: impl ToString) -> Self {
        Self { code: exit::SOLVER, message: m.to_string() }
    }
    pub fn io(m: impl ToString) -> Self {
        Self { code: exit::IO, message: m.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::io(e)
    }
}

/// Parses `args` (including the program name), runs the command and returns the
/// exit code. Messages go to standard error; summaries to standard output.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { exit::CONFIG } else { exit::OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| commands::dispatch(&cli)));
    match outcome {
        Ok(Ok(())) => exit::OK,
        Ok(Err(f)) => {
            eprintln!("error: {}", f.message);
            f.code
        }
        Err(_) => {
            eprintln!("error: internal failure (panic)");
            exit::SOLVER
        }
    }
}
