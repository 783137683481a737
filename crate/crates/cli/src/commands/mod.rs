pub mod focusing;
pub mod identities;
pub mod report;
pub mod simulate;
pub mod sweep;

use std::path::PathBuf;

use crate::config::RunConfig;
use crate::{CliError, RunArgs};

pub(crate) fn load(args: &RunArgs) -> Result<RunConfig, CliError> {
    RunConfig::load(&args.config).map_err(CliError::Validation)
}

/// `--out` wins over `output.directory`.
pub(crate) fn output_dir(args: &RunArgs, cfg: &RunConfig) -> Result<PathBuf, CliError> {
    match (&args.out, &cfg.output.directory) {
        (Some(dir), _) => Ok(dir.clone()),
        (None, Some(dir)) => Ok(PathBuf::from(dir)),
        (None, None) => Err(CliError::invalid("output.directory", "no output directory; set it or pass --out")),
    }
}

pub(crate) fn runtime(e: impl std::fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

/// Collects failed assertions; `Ok` when all held or `--check` was not given.
pub(crate) struct Checks {
    failed: Vec<String>,
    verbose: bool,
}

impl Checks {
    pub fn new(verbose: bool) -> Self {
        Self { failed: Vec::new(), verbose }
    }

    pub fn expect(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if self.verbose {
            println!("{} {what}", if ok { "PASS" } else { "FAIL" });
        }
        if !ok {
            self.failed.push(what);
        }
    }

    pub fn finish(self) -> Result<(), CliError> {
        if self.failed.is_empty() {
            Ok(())
        } else {
            Err(CliError::Check(self.failed))
        }
    }
}
