//! Command-line front end: config loading, dispatch, output directories.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod output;
pub mod summary;
pub mod svg;

use config::ConfigIssue;

/// Caps the worker count regardless of `--threads`.
pub const THREADS_ENV: &str = "CONGESTION_THREADS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;
pub const EXIT_CHECK: i32 = 3;

#[derive(Debug)]
pub enum CliError {
    Validation(Vec<ConfigIssue>),
    Runtime(String),
    /// `--check` assertions that did not hold.
    Check(Vec<String>),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Check(_) => EXIT_CHECK,
        }
    }

    pub fn invalid(path: &str, message: impl Into<String>) -> Self {
        CliError::Validation(vec![ConfigIssue { path: path.into(), message: message.into() }])
    }
}

impl From<ConfigIssue> for CliError {
    fn from(issue: ConfigIssue) -> Self {
        CliError::Validation(vec![issue])
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Validation(issues) => {
                writeln!(f, "invalid configuration:")?;
                for issue in issues {
                    writeln!(f, "  {issue}")?;
                }
                Ok(())
            }
            CliError::Runtime(msg) => writeln!(f, "error: {msg}"),
            CliError::Check(failed) => {
                writeln!(f, "check failed:")?;
                for c in failed {
                    writeln!(f, "  {c}")?;
                }
                Ok(())
            }
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "congestion", version, about = "Porous-medium drift-diffusion experiments in the stiff-pressure regime")]
pub struct Cli {
    /// Worker threads (default: all cores, capped by CONGESTION_THREADS).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate the acceptance assertions and exit 3 if any fails.
    #[arg(long)]
    pub check: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one (gamma, nu) simulation.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from a checkpoint directory or its state.json.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop at the first checkpoint holding at least this many samples,
        /// leaving the directory flagged incomplete.
        #[arg(long)]
        stop_after: Option<usize>,
    },
    /// Run every gamma of the config and compare them.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Gradient-norm growth on an annulus.
    Focusing {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Integration-by-parts identities on the manufactured corpus.
    Identities(commands::identities::IdentityArgs),
    /// Re-derive summaries and draw plots from output directories.
    Report(commands::report::ReportArgs),
}

fn thread_count(requested: Option<usize>) -> Result<usize, CliError> {
    let mut n = match requested {
        Some(0) => return Err(CliError::invalid("--threads", "must be at least 1")),
        Some(n) => n,
        None => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    };
    if let Ok(cap) = std::env::var(THREADS_ENV) {
        match cap.trim().parse::<usize>() {
            Ok(c) if c > 0 => n = n.min(c),
            _ => return Err(CliError::invalid(THREADS_ENV, format!("must be a positive integer, got {cap:?}"))),
        }
    }
    Ok(n)
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let threads = thread_count(cli.threads)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Simulate { run, resume, stop_after } => commands::simulate::run(&run, resume.as_deref(), stop_after),
        Command::Sweep { run } => commands::sweep::run(&run),
        Command::Focusing { run } => commands::focusing::run(&run),
        Command::Identities(args) => commands::identities::run(&args),
        Command::Report(args) => commands::report::run(&args),
    })
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_VALIDATION } else { EXIT_OK };
        }
    };
    match dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprint!("{e}");
            e.exit_code()
        }
    }
}
