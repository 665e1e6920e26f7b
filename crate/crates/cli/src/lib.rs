//! `npiv` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input (arguments, files, data), 3
//! numerical failure or internal error.

pub mod config;
pub mod data;
pub mod output;

use std::ffi::OsString;
use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use npiv_core::NpivError;

pub const VERSION: &str = env!("NPIV_BUILD_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ErrorKind {
    Input,
    Numerical,
}

#[derive(Debug, Clone)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Input,
            message: msg.into(),
        }
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numerical,
            message: msg.into(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self.kind {
            ErrorKind::Input => 2,
            ErrorKind::Numerical => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<NpivError> for CliError {
    fn from(e: NpivError) -> Self {
        if e.is_input() {
            CliError::input(e.to_string())
        } else {
            CliError::numerical(e.to_string())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "npiv", version = VERSION, about = "Adaptive sieve tests for nonparametric IV models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Test a shape or parametric restriction on a data set.
    Test {
        /// CSV with columns y, x (or x1..xd), w (or w1..wd), optional mu.
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        #[command(flatten)]
        flags: config::ConfigFlags,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        /// Write to this file instead of stdout.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Run a Monte Carlo experiment described by a JSON spec.
    Simulate {
        #[arg(long, value_name = "PATH")]
        spec: PathBuf,
        /// Override the spec's replication count.
        #[arg(long)]
        reps: Option<usize>,
        /// Override the spec's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (all cores by default).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output prefix: writes PREFIX.json, PREFIX.csv and PREFIX.replicates.csv.
        #[arg(long, value_name = "PREFIX")]
        out: Option<PathBuf>,
        /// Format for stdout when --out is absent.
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Regenerate a published table or figure (T1, T2, F1, F2, supp-C, supp-D).
    Reproduce {
        id: String,
        #[arg(long, default_value_t = 1000)]
        reps: usize,
        /// Master seed (falls back to NPIV_SEED, then 1).
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        jobs: Option<usize>,
        /// Restrict to these sample sizes, e.g. --n 500,1000.
        #[arg(long, value_delimiter = ',')]
        n: Option<Vec<usize>>,
        /// dyadic, knots, or an explicit list.
        #[arg(long, default_value = "dyadic")]
        grid: config::GridSpec,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Check candidate functions against the confidence set.
    Cs {
        #[arg(long, value_name = "PATH")]
        data: PathBuf,
        /// JSON file: {"candidates": [{"name": ..., "values" | "coefficients" | "parametric": ...}]}
        #[arg(long, value_name = "PATH")]
        candidate: PathBuf,
        #[command(flatten)]
        flags: config::ConfigFlags,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
}

/// Parse `args` (including the program name) and run; never panics.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let outcome = std::panic::catch_unwind(|| dispatch(cli));
    match outcome {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
        Err(_) => {
            eprintln!("error: internal failure (panic)");
            ExitCode::from(3)
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Test {
            data,
            flags,
            format,
            out,
        } => output::cmd_test(&data, &flags, format, out.as_deref()),
        Command::Simulate {
            spec,
            reps,
            seed,
            jobs,
            out,
            format,
        } => output::cmd_simulate(&spec, reps, seed, jobs, out.as_deref(), format),
        Command::Reproduce {
            id,
            reps,
            seed,
            jobs,
            n,
            grid,
            format,
            out,
        } => {
            let seed = match seed {
                Some(s) => s,
                None => config::env_seed()?.unwrap_or(1),
            };
            output::cmd_reproduce(&id, reps, seed, jobs, n, grid, format, out.as_deref())
        }
        Command::Cs {
            data,
            candidate,
            flags,
            format,
            out,
        } => output::cmd_cs(&data, &candidate, &flags, format, out.as_deref()),
    }
}
