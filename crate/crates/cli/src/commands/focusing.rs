use serde::{Deserialize, Serialize};

use congestion_core::experiments::{envelope_spread, focusing_ratios, focusing_study, FocusingRow, FOCUSING_EXPONENTS};

use super::{load, output_dir, runtime, Checks};
use crate::output::{num, OutputDir, CONFIG_COPY};
use crate::summary::ENVELOPE_MIN_GAMMA;
use crate::{CliError, RunArgs};

pub const FOCUSING_COLUMNS: [&str; 8] =
    ["gamma", "grad_p_l2", "grad_p_l4", "grad_p_l6", "grad_p_l8", "hole_closed", "closure_time", "error"];

/// `||grad p||_{L^2}` may vary by this fraction across the exponents `>= ENVELOPE_MIN_GAMMA`.
pub const L2_TOLERANCE: f64 = 0.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusingSummary {
    pub config_hash: String,
    pub rows: Vec<FocusingRow>,
    /// `ratios[c][k] = norm_c(gamma_{k+1}) / norm_c(gamma_k)`, `c` indexing the exponents.
    pub ratios: Vec<Vec<f64>>,
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let dir = output_dir(args, &cfg)?;
    let hash = cfg.hash();
    let plan = cfg.sweep_plan()?;
    let rows = focusing_study(&plan).map_err(|e| CliError::invalid("initial", e.to_string()))?;

    let mut out = OutputDir::create(&dir, "focusing", &hash)?;
    out.write_text(CONFIG_COPY, &cfg.canonical())?;
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![num(r.gamma)];
            row.extend(r.grad_p_norms.iter().map(|&v| num(v)));
            row.push(r.hole_closed.to_string());
            row.push(r.closure_time.map(num).unwrap_or_default());
            row.push(r.error.clone().unwrap_or_default());
            row
        })
        .collect();
    out.write_table("focusing.csv", &FOCUSING_COLUMNS, &table)?;
    let ratios = (0..FOCUSING_EXPONENTS.len()).map(|c| focusing_ratios(&rows, c)).collect();
    let summary = FocusingSummary { config_hash: hash.clone(), rows: rows.clone(), ratios };
    out.write_json("summary.json", &summary)?;
    for r in rows.iter().filter(|r| r.error.is_some()) {
        out.add_failure(format!("gamma = {}: {}", r.gamma, r.error.as_deref().unwrap_or_default()));
    }
    let manifest = out.finish()?;
    println!("focusing: {} exponents -> {}", rows.len(), dir.display());
    println!("config hash {hash}");
    if !manifest.failures.is_empty() {
        return Err(runtime(manifest.failures.join("; ")));
    }
    if args.check {
        check(&summary)?;
    }
    Ok(())
}

fn check(s: &FocusingSummary) -> Result<(), CliError> {
    let mut c = Checks::new(true);
    for r in &s.rows {
        c.expect(r.hole_closed, format!("gamma {}: hole closed before the horizon", r.gamma));
    }
    for (col, q) in [(2usize, 6), (3, 8)] {
        let ok = !s.ratios[col].is_empty() && s.ratios[col].iter().all(|&r| r > 1.0);
        c.expect(ok, format!("max-in-time L{q} norm strictly increases: ratios {:?}", s.ratios[col]));
    }
    let tail: Vec<f64> = s.rows.iter().filter(|r| r.gamma >= ENVELOPE_MIN_GAMMA).map(|r| r.grad_p_norms[0]).collect();
    let l2 = envelope_spread(&tail);
    c.expect(tail.len() >= 2 && l2 <= L2_TOLERANCE, format!("L2 norm over gamma >= {ENVELOPE_MIN_GAMMA} varies by {l2:.4} <= {L2_TOLERANCE}"));
    // growth ratios compared on the top doubling
    let top = |col: usize| s.ratios[col].last().copied().unwrap_or(f64::NAN);
    c.expect(top(1) < top(2), format!("top-octave q=4 ratio {:.4} below q=6 ratio {:.4}", top(1), top(2)));
    c.finish()
}
