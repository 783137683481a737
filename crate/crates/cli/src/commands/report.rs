use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;

use congestion_core::estimator::EstimateSeries;

use super::focusing::FocusingSummary;
use super::runtime;
use super::sweep::SweepSummary;
use crate::config::RunConfig;
use crate::output::{gamma_tag, io_error, parse_series, to_json, Manifest, OutputDir, CONFIG_COPY};
use crate::summary::{Envelopes, RunSummary};
use crate::svg::{line_plot, Axes, Line};
use crate::CliError;

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Output directories written by simulate, sweep or focusing.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Where to write the report (default: `report/` inside the first directory).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| io_error(path, e))
}

fn read_series(path: &Path) -> Result<EstimateSeries, CliError> {
    parse_series(&read(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

struct Source {
    dir: PathBuf,
    manifest: Manifest,
    config: RunConfig,
}

fn open(dir: &Path) -> Result<Source, CliError> {
    let manifest = Manifest::read(dir)?;
    if !manifest.complete {
        return Err(runtime(format!("{} is incomplete: {}", dir.display(), manifest.failures.join("; "))));
    }
    let config = RunConfig::parse(&read(&dir.join(CONFIG_COPY))?).map_err(CliError::Validation)?;
    if config.hash() != manifest.config_hash {
        return Err(runtime(format!("{}: {CONFIG_COPY} does not match the manifest hash", dir.display())));
    }
    Ok(Source { dir: dir.to_path_buf(), manifest, config })
}

/// Recomputes `summary.json` of a simulate directory and requires byte equality.
fn simulate_section(src: &Source, md: &mut String, plots: &mut Vec<(String, String)>) -> Result<(), CliError> {
    let series = read_series(&src.dir.join("series.csv"))?;
    let gamma = src.config.single_gamma()?;
    let recomputed = to_json(&RunSummary::from_series(&src.config, gamma, &series)?) + "\n";
    if recomputed != read(&src.dir.join("summary.json"))? {
        return Err(runtime(format!("{}: summary.json is not reproduced by series.csv", src.dir.display())));
    }
    let s: RunSummary = serde_json::from_str(&recomputed).map_err(runtime)?;
    let _ = writeln!(md, "## simulate `{}`\n", src.dir.display());
    let _ = writeln!(md, "gamma = {}, nu = {}, {} samples; summary.json reproduced exactly.\n", s.gamma, s.nu, s.samples);
    let _ = writeln!(md, "| bound | lhs | rhs | slack | passed |\n|---|---|---|---|---|");
    for b in &s.bounds.checks {
        let _ = writeln!(md, "| {} | {:.6e} | {:.6e} | {:.3e} | {} |", b.name, b.lhs, b.rhs, b.slack, b.passed);
    }
    let a = &s.accumulated;
    let _ = writeln!(
        md,
        "\naccumulated: grad_p_l2 {:.6e}, grad_p_l4 {:.6e}, p_hess_p {:.6e}, lap_sigma_l2 {:.6e}, grad_sigma_l4 {:.6e}\n",
        a.grad_p_l2, a.grad_p_l4, a.p_hess_p, a.lap_sigma_l2, a.grad_sigma_l4
    );
    let tag = gamma_tag(gamma);
    let col = |f: fn(&congestion_core::estimator::SnapshotRow) -> f64| series.rows.iter().map(|r| (r.t, f(r))).collect();
    plots.push((
        format!("simulate_gamma_{tag}_sup.svg"),
        line_plot(
            &format!("sup norms, gamma = {gamma}"),
            "t",
            "value",
            &[Line { label: "max p".into(), points: col(|r| r.p_sup) }, Line { label: "max n".into(), points: col(|r| r.n_sup) }],
            Axes::default(),
        ),
    ));
    plots.push((
        format!("simulate_gamma_{tag}_functionals.svg"),
        line_plot(
            &format!("space integrals, gamma = {gamma}"),
            "t",
            "value",
            &[
                Line { label: "|grad p|^2".into(), points: col(|r| r.grad_p_l2) },
                Line { label: "|grad p|^4".into(), points: col(|r| r.grad_p_l4) },
                Line { label: "|Lap Sigma|^2".into(), points: col(|r| r.lap_sigma_l2) },
            ],
            Axes { log_x: false, log_y: true },
        ),
    ));
    Ok(())
}

fn sweep_section(src: &Source, md: &mut String, plots: &mut Vec<(String, String)>) -> Result<(), CliError> {
    let stored: SweepSummary = serde_json::from_str(&read(&src.dir.join("summary.json"))?).map_err(runtime)?;
    let mut runs = Vec::new();
    for run in &stored.runs {
        let series = read_series(&src.dir.join(format!("series/gamma_{}.csv", gamma_tag(run.gamma))))?;
        let again = RunSummary::from_series(&src.config, run.gamma, &series)?;
        if to_json(&again) != to_json(run) {
            return Err(runtime(format!("{}: summary for gamma = {} is not reproduced", src.dir.display(), run.gamma)));
        }
        runs.push(again);
    }
    let envelopes = Envelopes::of(&runs);
    if to_json(&envelopes) != to_json(&stored.envelopes) {
        return Err(runtime(format!("{}: envelopes are not reproduced", src.dir.display())));
    }
    let _ = writeln!(md, "## sweep `{}`\n", src.dir.display());
    let _ = writeln!(md, "nu = {}; per-gamma summaries and envelopes reproduced exactly.\n", src.config.medium.nu);
    let _ = writeln!(md, "| gamma | grad_p_l4 | p_hess_p | lap_sigma_l2 | grad_sigma_l4 | final compl. | bounds |\n|---|---|---|---|---|---|---|");
    for r in &runs {
        let a = &r.accumulated;
        let _ = writeln!(
            md,
            "| {} | {:.6e} | {:.6e} | {:.6e} | {:.6e} | {:.3e} | {} |",
            r.gamma,
            a.grad_p_l4,
            a.p_hess_p,
            a.lap_sigma_l2,
            a.grad_sigma_l4,
            r.final_complementarity,
            r.bounds.checks.iter().all(|c| c.passed)
        );
    }
    let e = &envelopes;
    let _ = writeln!(
        md,
        "\nspreads over {:?}: grad_p_l4 {:.4}, p_hess_p {:.4}, lap_sigma_l2 {:.4}, grad_sigma_l4 {:.4}\n",
        e.gammas, e.grad_p_l4, e.p_hess_p, e.lap_sigma_l2, e.grad_sigma_l4
    );
    let _ = writeln!(md, "| gamma | next | sup_t L2 density | L2 H1 Sigma |\n|---|---|---|---|");
    for c in &stored.cauchy {
        let _ = writeln!(md, "| {} | {} | {:.6e} | {:.6e} |", c.gamma, c.next_gamma, c.density_sup_l2, c.sigma_l2_h1);
    }
    md.push('\n');
    let acc = |f: fn(&RunSummary) -> f64| runs.iter().map(|r| (r.gamma, f(r))).collect();
    plots.push((
        "sweep_accumulated.svg".into(),
        line_plot(
            "accumulated quantities",
            "gamma",
            "value",
            &[
                Line { label: "|grad p|^4".into(), points: acc(|r| r.accumulated.grad_p_l4) },
                Line { label: "p |D2 p|^2".into(), points: acc(|r| r.accumulated.p_hess_p) },
                Line { label: "|Lap Sigma|^2".into(), points: acc(|r| r.accumulated.lap_sigma_l2) },
                Line { label: "|grad Sigma|^4".into(), points: acc(|r| r.accumulated.grad_sigma_l4) },
            ],
            Axes { log_x: true, log_y: true },
        ),
    ));
    plots.push((
        "sweep_cauchy.svg".into(),
        line_plot(
            "consecutive-gamma differences",
            "gamma",
            "difference",
            &[
                Line { label: "sup_t |n - n'|_2".into(), points: stored.cauchy.iter().map(|c| (c.gamma, c.density_sup_l2)).collect() },
                Line { label: "|Sigma - Sigma'|".into(), points: stored.cauchy.iter().map(|c| (c.gamma, c.sigma_l2_h1)).collect() },
            ],
            Axes { log_x: true, log_y: true },
        ),
    ));
    Ok(())
}

fn focusing_section(src: &Source, md: &mut String, plots: &mut Vec<(String, String)>) -> Result<(), CliError> {
    let s: FocusingSummary = serde_json::from_str(&read(&src.dir.join("summary.json"))?).map_err(runtime)?;
    let _ = writeln!(md, "## focusing `{}`\n", src.dir.display());
    let _ = writeln!(md, "| gamma | L2 | L4 | L6 | L8 | closed at |\n|---|---|---|---|---|---|");
    for r in &s.rows {
        let n = r.grad_p_norms;
        let closed = r.closure_time.map(|t| t.to_string()).unwrap_or_else(|| "open".into());
        let _ = writeln!(md, "| {} | {:.6e} | {:.6e} | {:.6e} | {:.6e} | {closed} |", r.gamma, n[0], n[1], n[2], n[3]);
    }
    md.push('\n');
    let lines: Vec<Line> = (0..4)
        .map(|c| Line {
            label: format!("q = {}", 2 * (c + 1)),
            points: s.rows.iter().map(|r| (r.gamma, r.grad_p_norms[c])).collect(),
        })
        .collect();
    plots.push((
        "focusing_norms.svg".into(),
        line_plot("max-in-time |grad p|_q", "gamma", "norm", &lines, Axes { log_x: true, log_y: true }),
    ));
    Ok(())
}

pub fn run(a: &ReportArgs) -> Result<(), CliError> {
    let sources = a.dirs.iter().map(|d| open(d)).collect::<Result<Vec<_>, _>>()?;
    let hash = sources[0].manifest.config_hash.clone();
    if let Some(other) = sources.iter().find(|s| s.manifest.config_hash != hash) {
        return Err(CliError::invalid(
            "report",
            format!("{} has config hash {}, {} has {hash}", other.dir.display(), other.manifest.config_hash, sources[0].dir.display()),
        ));
    }
    let mut md = format!("# Report\n\nconfig hash `{hash}`\n\n");
    let mut plots = Vec::new();
    for src in &sources {
        match src.manifest.command.as_str() {
            "simulate" => simulate_section(src, &mut md, &mut plots)?,
            "sweep" => sweep_section(src, &mut md, &mut plots)?,
            "focusing" => focusing_section(src, &mut md, &mut plots)?,
            other => return Err(runtime(format!("{}: cannot report on `{other}` output", src.dir.display()))),
        }
    }
    let dest = a.out.clone().unwrap_or_else(|| sources[0].dir.join("report"));
    let mut out = OutputDir::create(&dest, "report", &hash)?;
    out.write_text("report.md", &md)?;
    for (name, svg) in &plots {
        out.write_text(name, svg)?;
    }
    out.finish()?;
    println!("report: {} director{} -> {}", sources.len(), if sources.len() == 1 { "y" } else { "ies" }, dest.display());
    Ok(())
}
