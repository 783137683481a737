use serde::{Deserialize, Serialize};

use congestion_core::experiments::{extract_limit, run_sweep, CauchyRow, SweepRow, DEFAULT_TAIL_RATIO, ENVELOPE_TOLERANCE};
use congestion_core::solver::RunStats;

use super::{load, output_dir, runtime, Checks};
use crate::output::{gamma_tag, num, series_text, OutputDir, CONFIG_COPY};
use crate::summary::{Envelopes, RunSummary};
use crate::{CliError, RunArgs};

pub const SWEEP_COLUMNS: [&str; 20] = [
    "gamma",
    "horizon",
    "p_integral",
    "grad_p_l2",
    "grad_p_l4",
    "p_hess_p",
    "p_lap_p",
    "p2_lap_p",
    "p2_hess_p",
    "grad_sigma_l2",
    "grad_sigma_l4",
    "lap_sigma_l2",
    "weighted_drift",
    "complementarity",
    "p_sup_max",
    "n_sup_max",
    "overshoot_max",
    "final_complementarity",
    "mass_drift",
    "bounds_passed",
];

pub const CAUCHY_COLUMNS: [&str; 4] = ["gamma", "next_gamma", "density_sup_l2", "sigma_l2_h1"];

/// The congested limit read off the largest exponent.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitSummary {
    pub gamma: f64,
    pub overshoot: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub config_hash: String,
    pub runs: Vec<RunSummary>,
    pub envelopes: Envelopes,
    pub cauchy: Vec<CauchyRow>,
    pub run_stats: Vec<RunStats>,
    pub limit: Option<LimitSummary>,
    /// Why no limit was extracted, if so.
    pub limit_error: Option<String>,
    pub failures: Vec<String>,
}

fn sweep_row(r: &SweepRow) -> Vec<String> {
    let a = &r.accumulated;
    let mut row: Vec<String> = [
        r.gamma,
        a.horizon,
        a.p_integral,
        a.grad_p_l2,
        a.grad_p_l4,
        a.p_hess_p,
        a.p_lap_p,
        a.p2_lap_p,
        a.p2_hess_p,
        a.grad_sigma_l2,
        a.grad_sigma_l4,
        a.lap_sigma_l2,
        a.weighted_drift,
        a.complementarity,
        r.p_sup_max,
        r.n_sup_max,
        r.overshoot_max,
        r.final_complementarity,
        r.mass_drift,
    ]
    .iter()
    .map(|&v| num(v))
    .collect();
    row.push(r.bounds_passed.to_string());
    row
}

/// Largest overshoot allowed by the sup bound at this exponent: `C*^(1/gamma) - 1 + 2h`.
pub fn overshoot_allowance(run: &RunSummary, h: f64) -> Option<f64> {
    let check = run.bounds.get("pressure_sup_comparison").or_else(|| run.bounds.get("pressure_sup_c_star"))?;
    Some(check.rhs.powf(1.0 / run.gamma) - 1.0 + 2.0 * h)
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let cfg = load(args)?;
    let dir = output_dir(args, &cfg)?;
    let hash = cfg.hash();
    let plan = cfg.sweep_plan()?;
    let grid = plan.scenario.grid;

    let mut out = OutputDir::create(&dir, "sweep", &hash)?;
    out.write_text(CONFIG_COPY, &cfg.canonical())?;
    let result = run_sweep(&plan).map_err(runtime)?;

    let mut runs = Vec::new();
    let mut run_stats = Vec::new();
    let mut failures = Vec::new();
    for r in &result.runs {
        match &r.outcome {
            Ok(record) => {
                let tag = gamma_tag(r.gamma);
                out.write_text(&format!("series/gamma_{tag}.csv"), &series_text(&record.series))?;
                if cfg.output.fields {
                    if let Some(last) = record.fields.last() {
                        let n = congestion_core::grid::ScalarField::new(grid, last.n.clone()).map_err(runtime)?;
                        out.write_field(&format!("fields/density_gamma_{tag}.bin"), &n)?;
                    }
                }
                runs.push(RunSummary::from_series(&cfg, r.gamma, &record.series)?);
                run_stats.push(record.stats);
            }
            Err(e) => {
                let f = format!("gamma = {}: {e}", r.gamma);
                out.add_failure(f.clone());
                failures.push(f);
            }
        }
    }
    let rows: Vec<Vec<String>> = result.table.iter().map(sweep_row).collect();
    out.write_table("sweep.csv", &SWEEP_COLUMNS, &rows)?;
    let cauchy_rows: Vec<Vec<String>> = result
        .cauchy
        .iter()
        .map(|c| vec![num(c.gamma), num(c.next_gamma), num(c.density_sup_l2), num(c.sigma_l2_h1)])
        .collect();
    out.write_table("cauchy.csv", &CAUCHY_COLUMNS, &cauchy_rows)?;

    let (limit, limit_error) = match extract_limit(&result, &grid, cfg.medium.nu, DEFAULT_TAIL_RATIO) {
        Ok(l) => {
            out.write_field("limit_fields/n_inf.bin", &l.n_inf)?;
            out.write_field("limit_fields/sigma_inf.bin", &l.sigma_inf)?;
            out.write_field("limit_fields/p_inf.bin", &l.p_inf)?;
            (Some(LimitSummary { gamma: l.gamma, overshoot: l.overshoot, residual: l.residual }), None)
        }
        Err(e) => (None, Some(e.to_string())),
    };
    let summary = SweepSummary {
        config_hash: hash.clone(),
        envelopes: Envelopes::of(&runs),
        runs,
        cauchy: result.cauchy.clone(),
        run_stats,
        limit,
        limit_error,
        failures: failures.clone(),
    };
    out.write_json("summary.json", &summary)?;
    out.finish()?;
    println!("sweep: {} exponents, {} failed -> {}", plan.gammas.len(), failures.len(), dir.display());
    println!("config hash {hash}");
    if !failures.is_empty() {
        return Err(CliError::Runtime(failures.join("; ")));
    }
    if args.check {
        check(&summary, grid.min_spacing())?;
    }
    Ok(())
}

fn check(s: &SweepSummary, h: f64) -> Result<(), CliError> {
    let mut c = Checks::new(true);
    for (run, stats) in s.runs.iter().zip(&s.run_stats) {
        let g = run.gamma;
        c.expect(stats.max_step_mass_change <= super::simulate::STEP_MASS_TOL, format!("gamma {g}: step mass change {:e}", stats.max_step_mass_change));
        c.expect(stats.min_before_clamp >= super::simulate::MIN_DENSITY, format!("gamma {g}: min density {:e}", stats.min_before_clamp));
        c.expect(stats.relative_mass_drift() <= super::simulate::RUN_MASS_TOL, format!("gamma {g}: mass drift {:e}", stats.relative_mass_drift()));
        for b in &run.bounds.checks {
            c.expect(b.passed, format!("gamma {g}: {} {:e} <= {:e} + {:e}", b.name, b.lhs, b.rhs, b.slack));
        }
        if let Some(allow) = overshoot_allowance(run, h) {
            c.expect(run.overshoot_max <= allow, format!("gamma {g}: overshoot {:e} <= {allow:e}", run.overshoot_max));
        }
    }
    let e = &s.envelopes;
    for (name, v) in [
        ("grad_p_l4", e.grad_p_l4),
        ("p_hess_p", e.p_hess_p),
        ("lap_sigma_l2", e.lap_sigma_l2),
        ("grad_sigma_l4", e.grad_sigma_l4),
    ] {
        c.expect(v <= ENVELOPE_TOLERANCE, format!("envelope {name} over {:?}: {v:.4} <= {ENVELOPE_TOLERANCE}", e.gammas));
    }
    let decreasing = s.cauchy.windows(2).all(|w| w[1].density_sup_l2 < w[0].density_sup_l2);
    c.expect(decreasing && !s.cauchy.is_empty(), "Cauchy differences strictly decreasing");
    if let (Some(first), Some(last)) = (s.runs.first(), s.runs.last()) {
        c.expect(
            last.final_complementarity <= 0.25 * first.final_complementarity,
            format!(
                "complementarity at gamma {}: {:e} <= 1/4 of {:e} at gamma {}",
                last.gamma, last.final_complementarity, first.final_complementarity, first.gamma
            ),
        );
        match &s.limit {
            Some(l) => c.expect(
                l.residual < last.final_complementarity,
                format!("limit residual {:e} < {:e}", l.residual, last.final_complementarity),
            ),
            None => c.expect(false, format!("limit extraction: {}", s.limit_error.as_deref().unwrap_or("missing"))),
        }
    }
    c.finish()
}
