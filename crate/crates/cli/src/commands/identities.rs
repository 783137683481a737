use std::path::PathBuf;

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use congestion_core::grid::Scheme;
use congestion_core::identities::{fd_convergence, manufactured_corpus, run_corpus, CorpusRow, FdConvergence, IDENTITY_TOL};

use super::Checks;
use crate::output::{num, table_text, OutputDir};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SchemeArg {
    Spectral,
    Centered2,
}

impl From<SchemeArg> for Scheme {
    fn from(s: SchemeArg) -> Self {
        match s {
            SchemeArg::Spectral => Scheme::Spectral,
            SchemeArg::Centered2 => Scheme::Centered2,
        }
    }
}

#[derive(Debug, Args)]
pub struct IdentityArgs {
    /// Cells per axis for the corpus table.
    #[arg(long, default_value_t = 128)]
    pub resolution: usize,
    #[arg(long, default_value_t = 2)]
    pub dim: usize,
    #[arg(long, default_value_t = 20)]
    pub pairs: usize,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = SchemeArg::Spectral)]
    pub scheme: SchemeArg,
    /// Resolutions of the finite-difference convergence table; empty skips it.
    #[arg(long, value_delimiter = ',', default_value = "64,128,256")]
    pub fd_resolutions: Vec<usize>,
    /// Also write the tables into this directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub check: bool,
}

pub const CORPUS_COLUMNS: [&str; 11] = [
    "pair",
    "cells",
    "gradient_laplacian_lhs",
    "gradient_laplacian_rhs",
    "gradient_laplacian_abs_err",
    "gradient_fourth_lhs",
    "gradient_fourth_rhs",
    "gradient_fourth_slack",
    "weighted_hessian_lhs",
    "weighted_hessian_rhs",
    "weighted_hessian_abs_err",
];

pub const FD_COLUMNS: [&str; 5] = ["pair", "identity", "cells", "residual", "order"];

#[derive(Debug, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub dim: usize,
    pub resolution: usize,
    pub pairs: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub corpus_passed: usize,
    pub worst_abs_err: f64,
    pub fd_passed: usize,
    pub fd_total: usize,
    pub min_fd_order: Option<f64>,
}

fn corpus_row(r: &CorpusRow) -> Vec<String> {
    vec![
        r.pair.to_string(),
        r.cells.to_string(),
        num(r.gradient_laplacian.lhs),
        num(r.gradient_laplacian.rhs),
        num(r.gradient_laplacian.abs_err),
        num(r.gradient_fourth.lhs),
        num(r.gradient_fourth.rhs),
        num(r.gradient_fourth.slack),
        num(r.weighted_hessian.lhs),
        num(r.weighted_hessian.rhs),
        num(r.weighted_hessian.abs_err),
    ]
}

fn fd_rows(fd: &[FdConvergence]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for c in fd {
        for (k, (&cells, &res)) in c.cells.iter().zip(&c.residuals).enumerate() {
            let order = if k == 0 { String::new() } else { num(c.orders[k - 1]) };
            rows.push(vec![c.pair.to_string(), c.identity.clone(), cells.to_string(), num(res), order]);
        }
    }
    rows
}

/// Identifies the run; stands in for a config hash.
fn run_id(a: &IdentityArgs) -> String {
    format!("identities:dim={}:n={}:pairs={}:seed={}:scheme={:?}:fd={:?}", a.dim, a.resolution, a.pairs, a.seed, a.scheme, a.fd_resolutions)
}

pub fn run(a: &IdentityArgs) -> Result<(), CliError> {
    if !(a.dim == 1 || a.dim == 2) {
        return Err(CliError::invalid("--dim", format!("must be 1 or 2, got {}", a.dim)));
    }
    if a.pairs == 0 {
        return Err(CliError::invalid("--pairs", "must be at least 1"));
    }
    let corpus = manufactured_corpus(a.dim, a.pairs, a.seed);
    let rows = run_corpus(&corpus, a.dim, a.resolution, a.scheme.into()).map_err(|e| CliError::invalid("--resolution", e.to_string()))?;
    let fd = if a.fd_resolutions.len() >= 2 {
        fd_convergence(&corpus, a.dim, &a.fd_resolutions).map_err(|e| CliError::invalid("--fd-resolutions", e.to_string()))?
    } else {
        Vec::new()
    };

    let corpus_table: Vec<Vec<String>> = rows.iter().map(corpus_row).collect();
    let worst = rows
        .iter()
        .flat_map(|r| [r.gradient_laplacian.abs_err, r.weighted_hessian.abs_err])
        .fold(0.0, f64::max);
    let summary = IdentitySummary {
        dim: a.dim,
        resolution: a.resolution,
        pairs: a.pairs,
        seed: a.seed,
        tolerance: IDENTITY_TOL,
        corpus_passed: rows.iter().filter(|r| r.passed(IDENTITY_TOL)).count(),
        worst_abs_err: worst,
        fd_passed: fd.iter().filter(|c| c.passed).count(),
        fd_total: fd.len(),
        min_fd_order: fd.iter().flat_map(|c| c.orders.iter().copied()).reduce(f64::min),
    };

    print!("{}", table_text(&CORPUS_COLUMNS, &corpus_table));
    println!(
        "{}/{} pairs pass at tolerance {:e}; worst identity error {:e}",
        summary.corpus_passed, summary.pairs, IDENTITY_TOL, worst
    );
    if !fd.is_empty() {
        println!("finite-difference order: {}/{} series pass, minimum observed order {:.3}", summary.fd_passed, summary.fd_total, summary.min_fd_order.unwrap_or(f64::NAN));
    }

    if let Some(dir) = &a.out {
        let mut out = OutputDir::create(dir, "identities", &run_id(a))?;
        out.write_table("identities.csv", &CORPUS_COLUMNS, &corpus_table)?;
        if !fd.is_empty() {
            out.write_table("fd_convergence.csv", &FD_COLUMNS, &fd_rows(&fd))?;
        }
        out.write_json("summary.json", &summary)?;
        out.finish()?;
    }

    if a.check {
        let mut c = Checks::new(true);
        c.expect(summary.corpus_passed == a.pairs, format!("{}/{} pairs within {IDENTITY_TOL:e}", summary.corpus_passed, a.pairs));
        c.expect(summary.fd_passed == summary.fd_total, format!("{}/{} finite-difference series reach the expected order", summary.fd_passed, summary.fd_total));
        c.finish()?;
    }
    Ok(())
}
