//! Time integration of `dn/dt = Lap Sigma(n) + div(n grad V)` on the torus.
//!
//! One step is an explicit first-order upwind update of the drift flux
//! followed by a backward-Euler solve of `n - dt L_h Sigma(n) = b` by Newton
//! iteration on `n`. Both parts are in conservative form, so mass is
//! preserved up to the nonlinear solver tolerance, and the drift update is
//! positivity preserving under the CFL restriction of [`drift_cfl_dt`].

mod linear;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{
    pressure_field, sigma_field, sigma_prime_unchecked, sigma_unchecked, ConstitutiveError, MediumParams,
};
use crate::grid::{integrate, Grid, GridError, ScalarField};
use crate::potential::{PotentialError, PotentialSpec};

use linear::{solve_shifted, Stencil};

/// Densities above this fraction of the maximum count as support when
/// checking that a `nu = 0` solution stays off the outermost cells. The
/// upwind and implicit updates leave geometrically decaying tails ahead of
/// the front, so the cut sits well above round-off.
pub const SUPPORT_THRESHOLD: f64 = 1e-6;

/// Largest total mass (integral) removed by clamping in one accepted step.
pub const MAX_CLAMPED_MASS: f64 = 1e-10;

/// Relative mismatch between the solution mass and the right-hand-side mass
/// that the nonlinear solve must reach.
const MASS_TOLERANCE: f64 = 1e-13;

const MIN_DT: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error("nonlinear solve failed at t = {t} (dt = {dt}): relative residual {residual:e} after {iterations} iterations")]
    NewtonFailed { t: f64, dt: f64, residual: f64, iterations: usize },
    #[error("clamped mass {clamped:e} exceeds the per-step limit at t = {t}")]
    Positivity { t: f64, clamped: f64 },
    #[error("support reached the periodic seam at t = {t}")]
    SeamViolation { t: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid sample times: {0}")]
    InvalidSamples(String),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl SolverError {
    fn is_retryable(&self) -> bool {
        matches!(self, SolverError::NewtonFailed { .. } | SolverError::Positivity { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    /// Upper bound on the very first step.
    pub dt_initial: f64,
    pub dt_max: f64,
    /// Fraction of the drift CFL limit that is used, in `(0, 1]`.
    pub cfl_safety: f64,
    /// Relative residual `||F||_2 / ||b||_2` at which Newton stops.
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    /// Retries with halved `dt` before a run aborts.
    pub max_halvings: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            dt_initial: 1e-3,
            dt_max: 1e-2,
            cfl_safety: 0.5,
            newton_tol: 1e-10,
            newton_max_iter: 50,
            linear_tol: 1e-11,
            linear_max_iter: 20_000,
            max_halvings: 10,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(SolverError::InvalidConfig(format!("{name} must be positive, got {v}")))
            }
        };
        positive("dt_initial", self.dt_initial)?;
        positive("dt_max", self.dt_max)?;
        positive("newton_tol", self.newton_tol)?;
        positive("linear_tol", self.linear_tol)?;
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(SolverError::InvalidConfig(format!("cfl_safety must lie in (0, 1], got {}", self.cfl_safety)));
        }
        if self.newton_max_iter == 0 || self.linear_max_iter == 0 {
            return Err(SolverError::InvalidConfig("iteration limits must be positive".into()));
        }
        Ok(())
    }
}

/// One time slice: density plus the pressure and Sigma it determines.
#[derive(Clone, Debug)]
pub struct SimState {
    t: f64,
    step: u64,
    params: MediumParams,
    n: ScalarField,
    p: ScalarField,
    sigma: ScalarField,
}

impl SimState {
    /// Builds a state; slightly negative round-off values are clamped to zero.
    pub fn new(n: ScalarField, params: MediumParams, t: f64) -> Result<Self, SolverError> {
        Self::with_step(n, params, t, 0)
    }

    pub fn with_step(n: ScalarField, params: MediumParams, t: f64, step: u64) -> Result<Self, SolverError> {
        let p = pressure_field(&n, &params)?;
        let sigma = sigma_field(&n, &params)?;
        let n = n.map(|v| v.max(0.0));
        Ok(Self { t, step, params, n, p, sigma })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &MediumParams {
        &self.params
    }

    pub fn density(&self) -> &ScalarField {
        &self.n
    }

    pub fn pressure(&self) -> &ScalarField {
        &self.p
    }

    pub fn sigma(&self) -> &ScalarField {
        &self.sigma
    }

    pub fn grid(&self) -> &Grid {
        self.n.grid()
    }

    pub fn mass(&self) -> f64 {
        integrate(&self.n)
    }
}

/// Per-step diagnostics.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    /// Time at the end of the step.
    pub t: f64,
    pub dt: f64,
    pub newton_iterations: usize,
    pub picard_iterations: usize,
    pub linear_iterations: usize,
    /// Final relative nonlinear residual.
    pub residual: f64,
    pub mass_before: f64,
    pub mass_after: f64,
    /// Smallest density value before clamping, over both substeps.
    pub min_before_clamp: f64,
    pub clamped_mass: f64,
}

impl StepStats {
    pub fn relative_mass_change(&self) -> f64 {
        if self.mass_before == 0.0 {
            self.mass_after.abs()
        } else {
            ((self.mass_after - self.mass_before) / self.mass_before).abs()
        }
    }
}

/// Upwind drift velocities `u = -grad V` on cell faces, from differences of
/// the sampled potential. `faces[a][i]` sits between cell `i` and its `+1`
/// neighbour on axis `a`.
struct FaceVelocity {
    faces: Vec<Vec<f64>>,
}

impl FaceVelocity {
    fn new(grid: &Grid, potential: &PotentialSpec, t: f64) -> Result<Self, SolverError> {
        let v = potential.sample(grid, t)?;
        let vals = v.values();
        let faces = (0..grid.dim())
            .map(|a| {
                let h = grid.spacing(a);
                (0..grid.len()).map(|i| -(vals[grid.shift(i, a, 1)] - vals[i]) / h).collect()
            })
            .collect();
        Ok(Self { faces })
    }

    fn is_zero(&self) -> bool {
        self.faces.iter().flatten().all(|&u| u == 0.0)
    }

    /// `b = n - dt div(u n)` with first-order upwind fluxes.
    fn transport(&self, grid: &Grid, n: &[f64], dt: f64) -> Vec<f64> {
        let mut b = n.to_vec();
        if self.is_zero() {
            return b;
        }
        for (a, u) in self.faces.iter().enumerate() {
            let ratio = dt / grid.spacing(a);
            let flux: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let up = grid.shift(i, a, 1);
                    u[i].max(0.0) * n[i] + u[i].min(0.0) * n[up]
                })
                .collect();
            for i in 0..grid.len() {
                let down = grid.shift(i, a, -1);
                b[i] -= ratio * (flux[i] - flux[down]);
            }
        }
        b
    }
}

/// Largest time step allowed by the drift at `state.t()`:
/// `safety * h / (2 max|grad V| + eps)`, capped at `dt_max` and floored at 1e-12.
pub fn drift_cfl_dt(state: &SimState, potential: &PotentialSpec, cfg: &SolverConfig) -> Result<f64, SolverError> {
    let fields = potential.eval(state.grid(), state.t())?;
    let max_grad = fields.grad.norm_squared().values().iter().fold(0.0f64, |m, &v| m.max(v)).sqrt();
    Ok(cfl_from_gradient(state.grid(), max_grad, cfg))
}

fn cfl_from_gradient(grid: &Grid, max_grad: f64, cfg: &SolverConfig) -> f64 {
    let limit = cfg.cfl_safety * grid.min_spacing() / (2.0 * max_grad + f64::MIN_POSITIVE);
    limit.min(cfg.dt_max).max(MIN_DT)
}

struct NewtonOutcome {
    n: Vec<f64>,
    newton_iterations: usize,
    picard_iterations: usize,
    linear_iterations: usize,
    residual: f64,
    min_before_clamp: f64,
    clamped: f64,
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Reusable machinery for one grid and medium.
struct Stepper<'a> {
    grid: Grid,
    params: MediumParams,
    cfg: &'a SolverConfig,
    stencil: Stencil,
}

impl<'a> Stepper<'a> {
    fn new(grid: Grid, params: MediumParams, cfg: &'a SolverConfig) -> Self {
        Self { grid, params, cfg, stencil: Stencil::new(&grid) }
    }

    fn residual(&self, n: &[f64], b: &[f64], dt: f64, out: &mut [f64]) -> f64 {
        let sigma: Vec<f64> = n.iter().map(|&v| sigma_unchecked(v, &self.params)).collect();
        for i in 0..n.len() {
            out[i] = n[i] - dt * self.stencil.apply_at(&sigma, i) - b[i];
        }
        l2(out)
    }

    /// Solves `n - dt L Sigma(n) = b` for `n >= 0`.
    fn implicit_diffusion(&self, b: &[f64], dt: f64, t: f64) -> Result<NewtonOutcome, SolverError> {
        let len = b.len();
        let b_norm = l2(b);
        let mut out = NewtonOutcome {
            n: b.iter().map(|&v| v.max(0.0)).collect(),
            newton_iterations: 0,
            picard_iterations: 0,
            linear_iterations: 0,
            residual: 0.0,
            min_before_clamp: 0.0,
            clamped: 0.0,
        };
        if b_norm == 0.0 {
            return Ok(out);
        }
        let b_mass: f64 = crate::grid::neumaier_sum(b);
        let mut f = vec![0.0; len];
        let mut f_norm = self.residual(&out.n, b, dt, &mut f);
        let mut trial_f = vec![0.0; len];
        let mut use_picard = false;
        let cfg = self.cfg;

        for _ in 0..cfg.newton_max_iter {
            let mass_gap = (crate::grid::neumaier_sum(&out.n) - b_mass).abs();
            if f_norm <= cfg.newton_tol * b_norm && mass_gap <= MASS_TOLERANCE * b_mass.abs() {
                out.residual = f_norm / b_norm;
                return Ok(out);
            }
            let (candidate, min_raw, clamped, cand_norm) = if use_picard {
                // lagged secant coefficient Sigma(n)/n, whose fixed point is the same solution
                out.picard_iterations += 1;
                let coef: Vec<f64> = out
                    .n
                    .iter()
                    .map(|&v| if v > 0.0 { sigma_unchecked(v, &self.params) / v } else { self.params.nu() })
                    .collect();
                let (x, stats) = solve_shifted(&self.stencil, &coef, dt, b, cfg.linear_tol, cfg.linear_max_iter);
                out.linear_iterations += stats.iterations;
                let (cand, min_raw, clamped) = clamp(x);
                let norm = self.residual(&cand, b, dt, &mut trial_f);
                use_picard = false;
                if norm >= f_norm {
                    continue;
                }
                (cand, min_raw, clamped, norm)
            } else {
                out.newton_iterations += 1;
                let coef: Vec<f64> = out.n.iter().map(|&v| sigma_prime_unchecked(v, &self.params)).collect();
                let neg_f: Vec<f64> = f.iter().map(|v| -v).collect();
                let (delta, stats) = solve_shifted(&self.stencil, &coef, dt, &neg_f, cfg.linear_tol, cfg.linear_max_iter);
                out.linear_iterations += stats.iterations;
                let mut lambda = 1.0;
                let mut accepted = None;
                for _ in 0..12 {
                    let raw: Vec<f64> = out.n.iter().zip(&delta).map(|(n, d)| n + lambda * d).collect();
                    let (cand, min_raw, clamped) = clamp(raw);
                    let norm = self.residual(&cand, b, dt, &mut trial_f);
                    if norm <= (1.0 - 1e-4 * lambda) * f_norm {
                        accepted = Some((cand, min_raw, clamped, norm));
                        break;
                    }
                    lambda *= 0.5;
                }
                match accepted {
                    Some(a) => {
                        if a.3 > 0.9 * f_norm {
                            use_picard = true;
                        }
                        a
                    }
                    None => {
                        use_picard = true;
                        continue;
                    }
                }
            };
            out.n = candidate;
            out.min_before_clamp = min_raw;
            out.clamped = clamped;
            std::mem::swap(&mut f, &mut trial_f);
            f_norm = cand_norm;
        }
        let mass_gap = (crate::grid::neumaier_sum(&out.n) - b_mass).abs();
        if f_norm <= cfg.newton_tol * b_norm && mass_gap <= MASS_TOLERANCE * b_mass.abs() {
            out.residual = f_norm / b_norm;
            return Ok(out);
        }
        Err(SolverError::NewtonFailed {
            t,
            dt,
            residual: f_norm / b_norm,
            iterations: out.newton_iterations + out.picard_iterations,
        })
    }

    fn step(&self, state: &SimState, velocity: &FaceVelocity, dt: f64) -> Result<(SimState, StepStats), SolverError> {
        let grid = &self.grid;
        let n_old = state.density().values();
        let b = velocity.transport(grid, n_old, dt);
        let (b, drift_min, drift_clamped) = clamp(b);
        let t_new = state.t() + dt;
        let solved = self.implicit_diffusion(&b, dt, t_new)?;
        let clamped_mass = (drift_clamped + solved.clamped) * grid.cell_volume();
        if clamped_mass > MAX_CLAMPED_MASS {
            return Err(SolverError::Positivity { t: t_new, clamped: clamped_mass });
        }
        let n_new = ScalarField::new(*grid, solved.n)?;
        let next = SimState::with_step(n_new, self.params, t_new, state.step() + 1)?;
        let stats = StepStats {
            t: t_new,
            dt,
            newton_iterations: solved.newton_iterations,
            picard_iterations: solved.picard_iterations,
            linear_iterations: solved.linear_iterations,
            residual: solved.residual,
            mass_before: state.mass(),
            mass_after: next.mass(),
            min_before_clamp: drift_min.min(solved.min_before_clamp),
            clamped_mass,
        };
        Ok((next, stats))
    }
}

/// Clamps negatives to zero; returns the smallest raw value and the removed amount.
fn clamp(mut v: Vec<f64>) -> (Vec<f64>, f64, f64) {
    let mut min_raw = f64::INFINITY;
    let mut removed = 0.0;
    for x in v.iter_mut() {
        min_raw = min_raw.min(*x);
        if *x < 0.0 {
            removed -= *x;
            *x = 0.0;
        }
    }
    (v, min_raw.min(0.0), removed)
}

/// Advances `state` by exactly `dt` (no CFL check).
pub fn step(
    state: &SimState,
    potential: &PotentialSpec,
    cfg: &SolverConfig,
    dt: f64,
) -> Result<(SimState, StepStats), SolverError> {
    cfg.validate()?;
    let stepper = Stepper::new(*state.grid(), *state.params(), cfg);
    let velocity = FaceVelocity::new(state.grid(), potential, state.t())?;
    stepper.step(state, &velocity, dt)
}

/// Accumulated diagnostics of a run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunStats {
    pub accepted_steps: u64,
    pub rejected_steps: u64,
    pub newton_iterations: u64,
    pub picard_iterations: u64,
    pub max_step_mass_change: f64,
    pub min_before_clamp: f64,
    pub total_clamped_mass: f64,
    pub initial_mass: f64,
    pub final_mass: f64,
}

impl RunStats {
    pub fn relative_mass_drift(&self) -> f64 {
        if self.initial_mass == 0.0 {
            self.final_mass.abs()
        } else {
            ((self.final_mass - self.initial_mass) / self.initial_mass).abs()
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    /// States at the requested sample times, in order.
    pub samples: Vec<SimState>,
    pub stats: RunStats,
}

fn check_seam(state: &SimState) -> Result<(), SolverError> {
    if state.params().nu() > 0.0 {
        return Ok(());
    }
    let n = state.density();
    let cut = SUPPORT_THRESHOLD * n.max();
    let grid = n.grid();
    if cut > 0.0 && n.values().iter().enumerate().any(|(i, &v)| v > cut && grid.on_seam(i)) {
        return Err(SolverError::SeamViolation { t: state.t() });
    }
    Ok(())
}

/// Integrates from `initial` at `t = 0` and returns the states at `sample_times`.
pub fn run(
    initial: ScalarField,
    params: MediumParams,
    potential: &PotentialSpec,
    cfg: &SolverConfig,
    horizon: f64,
    sample_times: &[f64],
    on_step: impl FnMut(&StepStats, &SimState),
) -> Result<RunOutput, SolverError> {
    let state = SimState::new(initial, params, 0.0)?;
    run_from(state, potential, cfg, horizon, sample_times, on_step)
}

/// Continues from an existing state; sample times before `state.t()` are skipped.
pub fn run_from(
    mut state: SimState,
    potential: &PotentialSpec,
    cfg: &SolverConfig,
    horizon: f64,
    sample_times: &[f64],
    mut on_step: impl FnMut(&StepStats, &SimState),
) -> Result<RunOutput, SolverError> {
    cfg.validate()?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(SolverError::InvalidSamples(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    if sample_times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(SolverError::InvalidSamples("sample times must be strictly increasing".into()));
    }
    if let Some(&bad) = sample_times.iter().find(|&&t| !(0.0..=horizon).contains(&t)) {
        return Err(SolverError::InvalidSamples(format!("sample time {bad} outside [0, {horizon}]")));
    }
    let potential = PotentialSpec { modes: potential.modes.clone(), horizon: Some(horizon) };
    potential.validate(state.grid().dim())?;
    check_seam(&state)?;

    let grid = *state.grid();
    let stepper = Stepper::new(grid, *state.params(), cfg);
    let static_drift = if potential.is_static() {
        let v = FaceVelocity::new(&grid, &potential, 0.0)?;
        let dt = drift_cfl_dt(&state, &potential, cfg)?;
        Some((v, dt))
    } else {
        None
    };

    let mut stats = RunStats {
        initial_mass: state.mass(),
        final_mass: state.mass(),
        min_before_clamp: 0.0,
        ..RunStats::default()
    };
    let mut samples = Vec::new();
    let time_eps = 1e-12 * horizon.max(1.0);

    for &target in sample_times {
        if target < state.t() - time_eps {
            continue;
        }
        while state.t() < target - time_eps {
            let (dynamic, cfl) = match &static_drift {
                Some((_, dt)) => (None, *dt),
                None => {
                    let v = FaceVelocity::new(&grid, &potential, state.t())?;
                    let dt = drift_cfl_dt(&state, &potential, cfg)?;
                    (Some(v), dt)
                }
            };
            let velocity = dynamic.as_ref().unwrap_or_else(|| &static_drift.as_ref().expect("static drift").0);
            let mut dt = cfl.min(cfg.dt_max);
            if state.step() == 0 {
                dt = dt.min(cfg.dt_initial);
            }
            let remaining = target - state.t();
            let mut hits_target = false;
            if dt >= remaining * (1.0 - 1e-9) {
                dt = remaining;
                hits_target = true;
            }
            let mut halvings = 0;
            let (mut next, step_stats) = loop {
                match stepper.step(&state, velocity, dt) {
                    Ok(ok) => break ok,
                    Err(e) if e.is_retryable() && halvings < cfg.max_halvings => {
                        halvings += 1;
                        stats.rejected_steps += 1;
                        dt *= 0.5;
                        hits_target = false;
                    }
                    Err(e) => return Err(e),
                }
            };
            if hits_target {
                next.t = target;
            }
            check_seam(&next)?;
            stats.accepted_steps += 1;
            stats.newton_iterations += step_stats.newton_iterations as u64;
            stats.picard_iterations += step_stats.picard_iterations as u64;
            stats.max_step_mass_change = stats.max_step_mass_change.max(step_stats.relative_mass_change());
            stats.min_before_clamp = stats.min_before_clamp.min(step_stats.min_before_clamp);
            stats.total_clamped_mass += step_stats.clamped_mass;
            on_step(&step_stats, &next);
            state = next;
        }
        samples.push(state.clone());
    }
    stats.final_mass = state.mass();
    Ok(RunOutput { samples, stats })
}

/// Metadata written next to a checkpointed density field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub gamma: f64,
    pub nu: f64,
    pub t: f64,
    pub step: u64,
    pub config_hash: String,
}

impl CheckpointMeta {
    pub fn of(state: &SimState, config_hash: &str) -> Self {
        Self {
            gamma: state.params().gamma(),
            nu: state.params().nu(),
            t: state.t(),
            step: state.step(),
            config_hash: config_hash.to_string(),
        }
    }

    pub fn restore(&self, n: ScalarField) -> Result<SimState, SolverError> {
        let params = MediumParams::new(self.gamma, self.nu)?;
        SimState::with_step(n, params, self.t, self.step)
    }
}

#[cfg(test)]
mod tests;
