//! Multi-gamma experiments: sweeps with cross-gamma tables, Cauchy
//! differences, extraction of the congested limit, and the focusing study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{limit_pressure_from_sigma, ConstitutiveError, MediumParams};
use crate::estimator::{
    bound_checks, snapshot_functionals, Accumulated, BoundReport, EstimateSeries, EstimatorError, InitialNorms,
    PotentialShape,
};
use crate::grid::{gradient, integrate, lp_norm, Grid, GridError, ScalarField, Scheme};
use crate::potential::{assemble_budget, Mode, PotentialBudget, PotentialError, PotentialSpec, Profile};
use crate::profiles::{InitialData, ProfileError};
use crate::solver::{run, run_from, RunStats, SolverConfig, SolverError};

pub const DEFAULT_GAMMAS: [f64; 6] = [5.0, 10.0, 20.0, 40.0, 80.0, 160.0];

/// Default envelope tolerance for cross-gamma spreads.
pub const ENVELOPE_TOLERANCE: f64 = 0.2;

/// Limit extraction needs the last Cauchy difference below this fraction of the first.
pub const DEFAULT_TAIL_RATIO: f64 = 0.25;

/// Exponents of the focusing table.
pub const FOCUSING_EXPONENTS: [f64; 4] = [2.0, 4.0, 6.0, 8.0];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("limit extraction refused: {0}")]
    CauchyTail(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Everything a run needs except the exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub grid: Grid,
    pub nu: f64,
    pub horizon: f64,
    /// Number of sample intervals; samples sit at `k T / samples`, `k = 0..=samples`.
    pub samples: usize,
    pub potential: PotentialSpec,
    pub initial: InitialData,
    pub solver: SolverConfig,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ExperimentError> {
        if !(self.nu.is_finite() && self.nu >= 0.0) {
            return Err(ExperimentError::InvalidPlan(format!("nu must be >= 0, got {}", self.nu)));
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(ExperimentError::InvalidPlan(format!("horizon must be >= 0, got {}", self.horizon)));
        }
        if self.samples == 0 && self.horizon > 0.0 {
            return Err(ExperimentError::InvalidPlan("need at least one sample interval".into()));
        }
        self.potential.validate(self.grid.dim())?;
        self.initial.validate(&self.grid)?;
        self.solver.validate()?;
        Ok(())
    }

    pub fn sample_times(&self) -> Vec<f64> {
        sample_times(self.horizon, self.samples)
    }
}

/// `k T / count` for `k = 0..=count`, with the last entry exactly `T`.
pub fn sample_times(horizon: f64, count: usize) -> Vec<f64> {
    if count == 0 || horizon == 0.0 {
        return vec![0.0];
    }
    let mut t: Vec<f64> = (0..=count).map(|k| horizon * k as f64 / count as f64).collect();
    t[count] = horizon;
    t
}

/// Density and Sigma at one sample time, kept for cross-gamma comparison.
#[derive(Clone, Debug)]
pub struct SampleFields {
    pub t: f64,
    pub n: Vec<f64>,
    pub sigma: Vec<f64>,
}

/// Outcome of one simulation.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub gamma: f64,
    pub series: EstimateSeries,
    pub stats: RunStats,
    pub budget: PotentialBudget,
    pub report: BoundReport,
    /// Present when fields were requested.
    pub fields: Vec<SampleFields>,
}

impl RunRecord {
    pub fn accumulated(&self) -> Accumulated {
        self.series.accumulate()
    }
}

fn budget_samples(samples: usize) -> usize {
    (samples + 1).max(crate::potential::MIN_TIME_SAMPLES)
}

/// Runs one exponent; the estimator is evaluated at every sample time.
pub fn simulate(scenario: &Scenario, gamma: f64, keep_fields: bool) -> Result<RunRecord, ExperimentError> {
    scenario.validate()?;
    let params = MediumParams::new(gamma, scenario.nu)?;
    let grid = scenario.grid;
    let n0 = scenario.initial.sample(&grid, &params)?;
    let times = scenario.sample_times();
    let out = run(n0, params, &scenario.potential, &scenario.solver, scenario.horizon, &times, |_, _| {})?;

    let mut series = EstimateSeries::default();
    let mut fields = Vec::new();
    for state in &out.samples {
        series.push(snapshot_functionals(state, &scenario.potential, state.t())?);
        if keep_fields {
            fields.push(SampleFields {
                t: state.t(),
                n: state.density().values().to_vec(),
                sigma: state.sigma().values().to_vec(),
            });
        }
    }
    let budget =
        assemble_budget(&scenario.potential, &grid, scenario.horizon, budget_samples(scenario.samples), scenario.nu)?;
    let initial = InitialNorms::from_series(&series)?;
    let report = bound_checks(&series, &budget, &params, &initial, PotentialShape::of(&scenario.potential));
    Ok(RunRecord { gamma, series, stats: out.stats, budget, report, fields })
}

#[derive(Clone, Debug, PartialEq)]
pub struct GammaSweepPlan {
    pub gammas: Vec<f64>,
    pub scenario: Scenario,
}

impl GammaSweepPlan {
    pub fn new(scenario: Scenario) -> Self {
        Self { gammas: DEFAULT_GAMMAS.to_vec(), scenario }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.gammas.is_empty() {
            return Err(ExperimentError::InvalidPlan("gamma list is empty".into()));
        }
        if self.gammas.iter().any(|&g| !(g.is_finite() && g > 1.0)) {
            return Err(ExperimentError::InvalidPlan("every gamma must be finite and > 1".into()));
        }
        if self.gammas.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ExperimentError::InvalidPlan("gamma list must be strictly increasing".into()));
        }
        self.scenario.validate()
    }
}

/// One gamma of a sweep: a record or the reason it failed.
#[derive(Clone, Debug)]
pub struct GammaRun {
    pub gamma: f64,
    pub outcome: Result<RunRecord, String>,
}

/// Cross-gamma table row.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gamma: f64,
    pub accumulated: Accumulated,
    pub p_sup_max: f64,
    pub n_sup_max: f64,
    pub overshoot_max: f64,
    /// Complementarity residual at the final time.
    pub final_complementarity: f64,
    pub mass_drift: f64,
    pub bounds_passed: bool,
}

/// Differences between consecutive exponents.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CauchyRow {
    pub gamma: f64,
    pub next_gamma: f64,
    /// `sup_t ||n_a - n_b||_2`
    pub density_sup_l2: f64,
    /// `||Sigma_a - Sigma_b||` in `L^2_t H^1_x`
    pub sigma_l2_h1: f64,
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    pub runs: Vec<GammaRun>,
    pub table: Vec<SweepRow>,
    pub cauchy: Vec<CauchyRow>,
}

impl SweepResult {
    pub fn record(&self, gamma: f64) -> Option<&RunRecord> {
        self.runs.iter().find(|r| r.gamma == gamma).and_then(|r| r.outcome.as_ref().ok())
    }

    pub fn row(&self, gamma: f64) -> Option<&SweepRow> {
        self.table.iter().find(|r| r.gamma == gamma)
    }

    pub fn failures(&self) -> Vec<(f64, &str)> {
        self.runs.iter().filter_map(|r| r.outcome.as_ref().err().map(|e| (r.gamma, e.as_str()))).collect()
    }
}

fn sweep_row(record: &RunRecord) -> SweepRow {
    let s = &record.series;
    SweepRow {
        gamma: record.gamma,
        accumulated: s.accumulate(),
        p_sup_max: s.max_of(|r| r.p_sup),
        n_sup_max: s.max_of(|r| r.n_sup),
        overshoot_max: s.max_of(|r| r.overshoot),
        final_complementarity: s.rows.last().map(|r| r.complementarity).unwrap_or(0.0),
        mass_drift: record.stats.relative_mass_drift(),
        bounds_passed: record.report.all_passed(),
    }
}

fn cauchy_row(grid: &Grid, a: &RunRecord, b: &RunRecord) -> Result<CauchyRow, ExperimentError> {
    let mut sup: f64 = 0.0;
    let mut h1_series = Vec::with_capacity(a.fields.len());
    let mut times = Vec::with_capacity(a.fields.len());
    for (fa, fb) in a.fields.iter().zip(&b.fields) {
        let dn = ScalarField::new(*grid, fa.n.iter().zip(&fb.n).map(|(x, y)| x - y).collect())?;
        sup = sup.max(lp_norm(&dn, 2.0)?);
        let ds = ScalarField::new(*grid, fa.sigma.iter().zip(&fb.sigma).map(|(x, y)| x - y).collect())?;
        let grad = gradient(&ds, Scheme::Centered2)?.norm_squared();
        h1_series.push(integrate(&ds.map(|x| x * x)) + integrate(&grad));
        times.push(fa.t);
    }
    let mut acc = 0.0;
    for k in 1..times.len() {
        acc += 0.5 * (times[k] - times[k - 1]) * (h1_series[k] + h1_series[k - 1]);
    }
    Ok(CauchyRow { gamma: a.gamma, next_gamma: b.gamma, density_sup_l2: sup, sigma_l2_h1: acc.sqrt() })
}

/// Runs every exponent of the plan concurrently and merges in plan order.
pub fn run_sweep(plan: &GammaSweepPlan) -> Result<SweepResult, ExperimentError> {
    plan.validate()?;
    let runs: Vec<GammaRun> = plan
        .gammas
        .par_iter()
        .map(|&gamma| GammaRun {
            gamma,
            outcome: simulate(&plan.scenario, gamma, true).map_err(|e| e.to_string()),
        })
        .collect();
    let table = runs.iter().filter_map(|r| r.outcome.as_ref().ok().map(sweep_row)).collect();
    let mut cauchy = Vec::new();
    for w in runs.windows(2) {
        if let (Ok(a), Ok(b)) = (&w[0].outcome, &w[1].outcome) {
            cauchy.push(cauchy_row(&plan.scenario.grid, a, b)?);
        }
    }
    Ok(SweepResult { runs, table, cauchy })
}

/// `(max - min) / min` of the values; 0 for fewer than two.
pub fn envelope_spread(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        return if max == min { 0.0 } else { f64::INFINITY };
    }
    (max - min) / min
}

/// Congested limit candidate taken from the largest exponent at the final time.
#[derive(Clone, Debug)]
pub struct LimitFields {
    pub gamma: f64,
    pub n_inf: ScalarField,
    pub sigma_inf: ScalarField,
    pub p_inf: ScalarField,
    /// `sup (n_inf - 1)_+`
    pub overshoot: f64,
    /// `int p_inf (1 - n_inf)_+`
    pub residual: f64,
}

/// Extracts the limit when the Cauchy tail has shrunk below `tail_ratio`
/// of its first entry.
pub fn extract_limit(
    result: &SweepResult,
    grid: &Grid,
    nu: f64,
    tail_ratio: f64,
) -> Result<LimitFields, ExperimentError> {
    let (first, last) = match (result.cauchy.first(), result.cauchy.last()) {
        (Some(f), Some(l)) if result.cauchy.len() >= 2 => (f, l),
        _ => return Err(ExperimentError::CauchyTail("need at least two Cauchy differences".into())),
    };
    if !(last.density_sup_l2 < tail_ratio * first.density_sup_l2) {
        return Err(ExperimentError::CauchyTail(format!(
            "last difference {:e} is not below {tail_ratio} of the first {:e}",
            last.density_sup_l2, first.density_sup_l2
        )));
    }
    let run = result
        .runs
        .iter()
        .rev()
        .find_map(|r| r.outcome.as_ref().ok())
        .ok_or_else(|| ExperimentError::CauchyTail("no successful run".into()))?;
    let fields = run
        .fields
        .last()
        .ok_or_else(|| ExperimentError::CauchyTail("largest exponent kept no fields".into()))?;
    let n_inf = ScalarField::new(*grid, fields.n.clone())?;
    let sigma_inf = ScalarField::new(*grid, fields.sigma.clone())?;
    let p_values = fields
        .sigma
        .iter()
        .map(|&s| limit_pressure_from_sigma(s, nu))
        .collect::<Result<Vec<f64>, _>>()?;
    let p_inf = ScalarField::new(*grid, p_values)?;
    let (residual, overshoot) = crate::estimator::complementarity_residual(&n_inf, &p_inf)?;
    Ok(LimitFields { gamma: run.gamma, n_inf, sigma_inf, p_inf, overshoot, residual })
}

/// Maximal-in-time `||grad p||_{L^q}` for each exponent of the focusing table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FocusingRow {
    pub gamma: f64,
    /// Indexed like [`FOCUSING_EXPONENTS`].
    pub grad_p_norms: [f64; 4],
    pub hole_closed: bool,
    /// First sample time at which the centre is filled.
    pub closure_time: Option<f64>,
    pub error: Option<String>,
}

/// Density at the annulus centre above this fraction of the maximum marks closure.
const CLOSURE_FRACTION: f64 = 0.5;

fn focusing_run(scenario: &Scenario, gamma: f64, center: usize) -> Result<FocusingRow, ExperimentError> {
    let params = MediumParams::new(gamma, scenario.nu)?;
    let n0 = scenario.initial.sample(&scenario.grid, &params)?;
    let times = scenario.sample_times();
    let mut norms = [0.0f64; 4];
    let mut closure_time = None;
    // every accepted step is observed; the closure spike is brief
    let mut observe = |state: &crate::solver::SimState| -> Result<(), GridError> {
        let grad = gradient(state.pressure(), Scheme::Centered2)?.norm_squared();
        for (slot, &q) in norms.iter_mut().zip(&FOCUSING_EXPONENTS) {
            let value = integrate(&grad.map(|g| g.powf(q / 2.0))).powf(1.0 / q);
            *slot = slot.max(value);
        }
        let n = state.density();
        if closure_time.is_none() && n.values()[center] >= CLOSURE_FRACTION * n.max() && n.max() > 0.0 {
            closure_time = Some(state.t());
        }
        Ok(())
    };
    let initial = crate::solver::SimState::new(n0, params, 0.0)?;
    observe(&initial)?;
    let mut observed = Ok(());
    let out = run_from(initial, &scenario.potential, &scenario.solver, scenario.horizon, &times, |_, s| {
        if observed.is_ok() {
            observed = observe(s);
        }
    });
    observed?;
    let error = out.err().map(|e| e.to_string());
    Ok(FocusingRow { gamma, grad_p_norms: norms, hole_closed: closure_time.is_some(), closure_time, error })
}

/// Runs the annulus scenario for every exponent of the plan.
pub fn focusing_study(plan: &GammaSweepPlan) -> Result<Vec<FocusingRow>, ExperimentError> {
    plan.validate()?;
    let center = match &plan.scenario.initial {
        InitialData::Annulus { center, .. } => center.clone(),
        _ => return Err(ExperimentError::InvalidPlan("focusing needs annulus initial data".into())),
    };
    if plan.scenario.nu != 0.0 {
        return Err(ExperimentError::InvalidPlan("focusing needs nu = 0".into()));
    }
    let grid = plan.scenario.grid;
    let nearest = (0..grid.len())
        .min_by(|&a, &b| {
            let da = crate::profiles::periodic_distance(&grid, grid.coords(a), &center);
            let db = crate::profiles::periodic_distance(&grid, grid.coords(b), &center);
            da.total_cmp(&db)
        })
        .unwrap_or(0);
    plan.gammas.par_iter().map(|&gamma| focusing_run(&plan.scenario, gamma, nearest)).collect()
}

/// Growth factor `v[k+1] / v[k]` of one focusing column.
pub fn focusing_ratios(rows: &[FocusingRow], column: usize) -> Vec<f64> {
    rows.windows(2).map(|w| w[1].grad_p_norms[column] / w[0].grad_p_norms[column]).collect()
}

/// Reference scenarios shared by the tests, the acceptance suite and the CLI examples.
pub mod reference {
    use super::*;
    use crate::potential::{Envelope, Phase};

    fn well(depth: f64, width: f64) -> Mode {
        Mode { amplitude: -depth, profile: Profile::Bump { center: vec![0.5, 0.5], width }, envelope: Envelope::Constant }
    }

    /// Mass pushed into a static potential well: compact bump off the well
    /// centre, drift towards it, diffusion spreading it.
    pub fn drift_well(cells: usize, nu: f64) -> Scenario {
        Scenario {
            grid: Grid::new_2d(cells, 1.0).expect("valid grid"),
            nu,
            horizon: 0.5,
            samples: 200,
            potential: PotentialSpec::single(well(4.0, 0.2)),
            initial: InitialData::CompactBump { center: vec![0.47, 0.5], radius: 0.36, amplitude: 0.9 },
            solver: SolverConfig::default(),
        }
    }

    /// Smooth periodic data below the constraint under one static Fourier mode.
    pub fn smooth_mode(cells: usize, nu: f64) -> Scenario {
        Scenario {
            grid: Grid::new_2d(cells, 1.0).expect("valid grid"),
            nu,
            horizon: 0.5,
            samples: 200,
            potential: PotentialSpec::single(Mode {
                amplitude: 0.5,
                profile: Profile::Fourier { wavevector: vec![1, 1], phases: vec![Phase::Cos, Phase::Cos] },
                envelope: Envelope::Constant,
            }),
            initial: InitialData::RandomSmooth { seed: 17, mean: 0.65, amplitude: 0.3, max_wavenumber: 2 },
            solver: SolverConfig::default(),
        }
    }

    /// Thin ring around a shallow well. The drift closes the hole at a time
    /// nearly independent of gamma, which is where the pressure gradient focuses.
    pub fn annulus(cells: usize) -> Scenario {
        Scenario {
            grid: Grid::new_2d(cells, 1.0).expect("valid grid"),
            nu: 0.0,
            horizon: 0.2,
            samples: 100,
            potential: PotentialSpec::single(well(1.0, 0.3)),
            initial: InitialData::Annulus { center: vec![0.5, 0.5], radius: 0.25, half_width: 0.06, peak_pressure: 0.01 },
            solver: SolverConfig::default(),
        }
    }
}
