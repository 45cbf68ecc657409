//! The `dwlab` command line. Each subcommand writes its outputs, then a
//! [`manifest::RunManifest`] beside them. Exit codes: 0 on success, 2 for
//! invalid input, 3 for numerical failure.

use std::ffi::OsString;
use std::fmt;
use std::path::Path;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
pub mod formats;
pub mod manifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }

    pub(crate) fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Validation(format!("{}: {e}", path.display()))
    }

    pub(crate) fn csv(path: &Path, e: csv::Error) -> Self {
        CliError::Validation(format!("{}: {e}", path.display()))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<dwlab_core::Error> for CliError {
    fn from(e: dwlab_core::Error) -> Self {
        if e.is_validation() {
            CliError::Validation(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "dwlab", version, about = "Domain walls of coupled Gross-Pitaevskii systems")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OpArg {
    Lminus,
    Lplus,
    Lr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    #[value(name = "rhoR")]
    RhoR,
    #[value(name = "rhoA")]
    RhoA,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve for the wall and write x,u1,u2 plus a JSON sidecar.
    Profile {
        #[arg(long)]
        gamma: f64,
        #[arg(long = "L", default_value_t = 30.0)]
        l: f64,
        #[arg(long, default_value_t = 6001)]
        n: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Energy of a state file.
    Energy {
        #[arg(long)]
        state: std::path::PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// rho_R or rho_A distance between two state files.
    Distance {
        #[arg(long)]
        metric: MetricArg,
        /// R for rhoR, A for rhoA.
        #[arg(long)]
        param: f64,
        #[arg(long)]
        a: std::path::PathBuf,
        #[arg(long)]
        b: std::path::PathBuf,
        /// Coupling of the wall that sets the weights of rhoR.
        #[arg(long, default_value_t = 2.0)]
        gamma: f64,
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Lowest eigenvalues of (L, K).
    Spectrum {
        #[arg(long)]
        op: OpArg,
        #[arg(long = "R")]
        r: Option<f64>,
        #[arg(long)]
        gamma: f64,
        #[arg(long, default_value_t = 3)]
        modes: usize,
        #[arg(long = "L", default_value_t = 30.0)]
        l: f64,
        #[arg(long, default_value_t = 6001)]
        n: usize,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Eigenvalues of (L_R, K) along a list of R.
    Continuation {
        #[arg(long)]
        gamma: f64,
        #[arg(long = "R-list", value_delimiter = ',', required = true)]
        r_list: Vec<f64>,
        #[arg(long, default_value_t = 3)]
        modes: usize,
        #[arg(long = "L", default_value_t = 30.0)]
        l: f64,
        #[arg(long, default_value_t = 6001)]
        n: usize,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Time evolution from a state or profile file.
    Evolve {
        #[arg(long)]
        init: std::path::PathBuf,
        #[arg(long)]
        gamma: f64,
        #[arg(long)]
        dt: f64,
        #[arg(long = "T")]
        t_final: f64,
        #[arg(long, default_value_t = 10)]
        stride: usize,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Modulation parameters along a stored trajectory.
    Track {
        #[arg(long)]
        traj: std::path::PathBuf,
        #[arg(long)]
        profile: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Stability experiment from a key = value config; repeat --config for a sweep.
    Stability {
        #[arg(long, required = true)]
        config: Vec<std::path::PathBuf>,
        /// Report file, or a directory when several configs are given.
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Quick checks of exactly known cases.
    Selftest,
    /// Recompute the derived reference values and merge them into the store.
    GoldenUpdate {
        #[arg(long, default_value = "crates/core/golden/derived.json")]
        store: std::path::PathBuf,
        /// Finest oracle grid.
        #[arg(long, default_value_t = 6001)]
        n: usize,
        /// Accept drift beyond five tolerances.
        #[arg(long)]
        force: bool,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("DWLAB_THREADS") else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Validation(format!("DWLAB_THREADS must be a positive integer (got {v:?})")))?;
    // A pool may already exist when called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match configure_threads().and_then(|_| commands::dispatch(cli.command)) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
