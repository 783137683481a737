use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use congestion_core::constitutive::MediumParams;
use congestion_core::estimator::{snapshot_functionals, EstimateSeries};
use congestion_core::grid::read_field_binary;
use congestion_core::solver::{run_from, CheckpointMeta, RunStats, SimState};

use super::{load, output_dir, runtime, Checks};
use crate::config::RunConfig;
use crate::output::{io_error, parse_series, series_text, OutputDir, CONFIG_COPY};
use crate::summary::RunSummary;
use crate::{CliError, RunArgs};

pub const CHECKPOINT_DIR: &str = "checkpoint";
pub const CHECKPOINT_FIELD: &str = "state.bin";
pub const CHECKPOINT_META: &str = "state.json";

/// Largest relative mass change tolerated in one accepted step.
pub const STEP_MASS_TOL: f64 = 1e-12;
/// Most negative density tolerated before clamping.
pub const MIN_DENSITY: f64 = -1e-12;
/// Largest relative mass drift over a whole run.
pub const RUN_MASS_TOL: f64 = 1e-10;

/// Everything needed to continue a run besides the density field.
#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub stats: RunStats,
    /// The series table up to and including `meta.t`.
    pub series: String,
}

fn merge(acc: Option<RunStats>, next: RunStats) -> RunStats {
    match acc {
        None => next,
        Some(a) => RunStats {
            accepted_steps: a.accepted_steps + next.accepted_steps,
            rejected_steps: a.rejected_steps + next.rejected_steps,
            newton_iterations: a.newton_iterations + next.newton_iterations,
            picard_iterations: a.picard_iterations + next.picard_iterations,
            max_step_mass_change: a.max_step_mass_change.max(next.max_step_mass_change),
            min_before_clamp: a.min_before_clamp.min(next.min_before_clamp),
            total_clamped_mass: a.total_clamped_mass + next.total_clamped_mass,
            initial_mass: a.initial_mass,
            final_mass: next.final_mass,
        },
    }
}

fn checkpoint_paths(path: &Path) -> (PathBuf, PathBuf) {
    let dir = if path.is_dir() { path.to_path_buf() } else { path.parent().unwrap_or(Path::new(".")).to_path_buf() };
    (dir.join(CHECKPOINT_META), dir.join(CHECKPOINT_FIELD))
}

fn load_checkpoint(path: &Path, cfg: &RunConfig, gamma: f64) -> Result<(SimState, EstimateSeries, RunStats), CliError> {
    let (meta_path, field_path) = checkpoint_paths(path);
    let text = fs::read_to_string(&meta_path).map_err(|e| io_error(&meta_path, e))?;
    let cp: Checkpoint =
        serde_json::from_str(&text).map_err(|e| runtime(format!("{}: {e}", meta_path.display())))?;
    if cp.meta.config_hash != cfg.hash() {
        return Err(CliError::invalid(
            "--resume",
            format!("checkpoint belongs to config {}, not {}", cp.meta.config_hash, cfg.hash()),
        ));
    }
    if cp.meta.gamma != gamma || cp.meta.nu != cfg.medium.nu {
        return Err(CliError::invalid("--resume", "checkpoint exponent or viscosity differs from the config"));
    }
    let file = fs::File::open(&field_path).map_err(|e| io_error(&field_path, e))?;
    let n = read_field_binary(std::io::BufReader::new(file)).map_err(runtime)?;
    if n.grid() != &cfg.grid()? {
        return Err(CliError::invalid("--resume", "checkpoint grid differs from the config"));
    }
    let series = parse_series(&cp.series).map_err(|e| runtime(format!("{}: {e}", meta_path.display())))?;
    let state = cp.meta.restore(n).map_err(runtime)?;
    Ok((state, series, cp.stats))
}

fn write_checkpoint(
    out: &mut OutputDir,
    state: &SimState,
    series: &EstimateSeries,
    stats: RunStats,
    hash: &str,
) -> Result<(), CliError> {
    let cp = Checkpoint { meta: CheckpointMeta::of(state, hash), stats, series: series_text(series) };
    out.write_field(&format!("{CHECKPOINT_DIR}/{CHECKPOINT_FIELD}"), state.density())?;
    out.write_json(&format!("{CHECKPOINT_DIR}/{CHECKPOINT_META}"), &cp)
}

pub fn run(args: &RunArgs, resume: Option<&Path>, stop_after: Option<usize>) -> Result<(), CliError> {
    let cfg = load(args)?;
    if stop_after.is_some() && cfg.output.checkpoint_every == 0 {
        return Err(CliError::invalid("output.checkpoint_every", "--stop-after needs checkpoints"));
    }
    let gamma = cfg.single_gamma()?;
    let dir = output_dir(args, &cfg)?;
    let hash = cfg.hash();
    let scenario = cfg.scenario()?;
    let params = MediumParams::new(gamma, cfg.medium.nu).map_err(runtime)?;

    let (mut state, mut series, mut stats) = match resume {
        Some(path) => {
            let (s, series, stats) = load_checkpoint(path, &cfg, gamma)?;
            (s, series, Some(stats))
        }
        None => {
            let n0 = cfg.initial.sample(&scenario.grid, &params).map_err(runtime)?;
            (SimState::new(n0, params, 0.0).map_err(runtime)?, EstimateSeries::default(), None)
        }
    };
    let pending: Vec<f64> = scenario
        .sample_times()
        .into_iter()
        .filter(|&t| series.rows.last().is_none_or(|r| t > r.t))
        .collect();

    let mut out = OutputDir::create(&dir, "simulate", &hash)?;
    out.write_text(CONFIG_COPY, &cfg.canonical())?;
    let chunk = if cfg.output.checkpoint_every == 0 { pending.len().max(1) } else { cfg.output.checkpoint_every };
    let mut failure = None;
    for times in pending.chunks(chunk) {
        let result = run_from(state.clone(), &scenario.potential, &scenario.solver, scenario.horizon, times, |_, _| {});
        let run = match result {
            Ok(r) => r,
            Err(e) => {
                failure = Some(format!("t = {}: {e}", state.t()));
                break;
            }
        };
        for s in &run.samples {
            series.push(snapshot_functionals(s, &scenario.potential, s.t()).map_err(runtime)?);
        }
        stats = Some(merge(stats, run.stats));
        if let Some(last) = run.samples.last() {
            state = last.clone();
        }
        if cfg.output.checkpoint_every > 0 {
            write_checkpoint(&mut out, &state, &series, stats.unwrap_or_default(), &hash)?;
        }
        if stop_after.is_some_and(|k| series.len() >= k) && series.len() < scenario.sample_times().len() {
            out.write_text("series.csv", &series_text(&series))?;
            out.add_failure(format!("stopped at t = {} on request; resume from {CHECKPOINT_DIR}/", state.t()));
            out.finish()?;
            println!("simulate: stopped at t = {} after {} samples", state.t(), series.len());
            return Ok(());
        }
    }
    let stats = stats.unwrap_or_default();

    out.write_text("series.csv", &series_text(&series))?;
    out.write_json("run_stats.json", &stats)?;
    if let Some(f) = failure {
        out.add_failure(f.clone());
        out.finish()?;
        return Err(CliError::Runtime(f));
    }
    let summary = RunSummary::from_series(&cfg, gamma, &series)?;
    out.write_json("summary.json", &summary)?;
    if cfg.output.fields {
        out.write_field("fields/density_final.bin", state.density())?;
    }
    let manifest = out.finish()?;
    println!("simulate: gamma = {gamma}, nu = {}, {} samples -> {}", cfg.medium.nu, series.len(), dir.display());
    println!("config hash {}", manifest.config_hash);

    let mut checks = Checks::new(args.check);
    if args.check {
        checks.expect(stats.max_step_mass_change <= STEP_MASS_TOL, format!("step mass change {:e} <= {STEP_MASS_TOL:e}", stats.max_step_mass_change));
        checks.expect(stats.min_before_clamp >= MIN_DENSITY, format!("min density {:e} >= {MIN_DENSITY:e}", stats.min_before_clamp));
        let drift = stats.relative_mass_drift();
        checks.expect(drift <= RUN_MASS_TOL, format!("run mass drift {drift:e} <= {RUN_MASS_TOL:e}"));
        for b in &summary.bounds.checks {
            checks.expect(b.passed, format!("{}: {:e} <= {:e} + {:e}", b.name, b.lhs, b.rhs, b.slack));
        }
    }
    checks.finish()
}
