//! Closed-form potentials `V(x, t)` on the torus.
//!
//! A potential is a sum of modes, each an amplitude times a product of
//! one-dimensional periodic factors times a temporal envelope. Every
//! derivative is evaluated from its exact formula.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{integrate, max_abs, Grid, GridError, ScalarField, TensorField, VectorField};

/// Fewest time samples accepted by [`assemble_budget`].
pub const MIN_TIME_SAMPLES: usize = 16;

#[derive(Debug, Error)]
pub enum PotentialError {
    #[error("time {t} outside the horizon [0, {horizon}]")]
    OutsideHorizon { t: f64, horizon: f64 },
    #[error("mode {mode}: {reason}")]
    InvalidMode { mode: usize, reason: String },
    #[error("need at least {MIN_TIME_SAMPLES} time samples, got {0}")]
    TooFewSamples(usize),
    #[error("invalid horizon {0}")]
    InvalidHorizon(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Cos,
    Sin,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    /// `prod_a trig_a(2 pi k_a x_a / L_a)` with integer wavenumbers.
    Fourier { wavevector: Vec<i32>, phases: Vec<Phase> },
    /// Periodic Gaussian `prod_a exp(kappa_a (cos(2 pi (x_a - c_a) / L_a) - 1))`,
    /// `kappa_a = (L_a / (2 pi w))^2`, which behaves like
    /// `exp(-|x - c|^2 / 2w^2)` near the centre.
    Bump { center: Vec<f64>, width: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Envelope {
    Constant,
    /// `exp(-rate t)`
    Decay { rate: f64 },
    /// `cos(omega t)`
    Oscillate { omega: f64 },
}

impl Envelope {
    fn value(&self, t: f64) -> (f64, f64) {
        match *self {
            Envelope::Constant => (1.0, 0.0),
            Envelope::Decay { rate } => {
                let e = (-rate * t).exp();
                (e, -rate * e)
            }
            Envelope::Oscillate { omega } => ((omega * t).cos(), -omega * (omega * t).sin()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Mode {
    pub amplitude: f64,
    pub profile: Profile,
    #[serde(default = "constant_envelope")]
    pub envelope: Envelope,
}

fn constant_envelope() -> Envelope {
    Envelope::Constant
}

/// Sum of closed-form modes, optionally restricted to `t in [0, horizon]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    #[serde(default)]
    pub modes: Vec<Mode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
}

/// Exact samples of `V` and its derivatives at one time.
#[derive(Clone, Debug)]
pub struct PotentialFields {
    pub v: ScalarField,
    pub grad: VectorField,
    pub lap: ScalarField,
    pub hess: TensorField,
    pub dt: ScalarField,
}

/// Value, first and second derivative of one periodic factor.
fn axis_factor(profile: &Profile, axis: usize, x: f64, side: f64) -> (f64, f64, f64) {
    match profile {
        Profile::Fourier { wavevector, phases } => {
            let k = 2.0 * PI * wavevector[axis] as f64 / side;
            let (s, c) = (k * x).sin_cos();
            match phases[axis] {
                Phase::Cos => (c, -k * s, -k * k * c),
                Phase::Sin => (s, k * c, -k * k * s),
            }
        }
        Profile::Bump { center, width } => {
            let a = 2.0 * PI / side;
            let kappa = 1.0 / (a * width).powi(2);
            let (s, c) = (a * (x - center[axis])).sin_cos();
            let phi = (kappa * (c - 1.0)).exp();
            (phi, -kappa * a * s * phi, (kappa * kappa * a * a * s * s - kappa * a * a * c) * phi)
        }
    }
}

impl PotentialSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn single(mode: Mode) -> Self {
        Self { modes: vec![mode], horizon: None }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = Some(horizon);
        self
    }

    pub fn is_zero(&self) -> bool {
        self.modes.iter().all(|m| m.amplitude == 0.0)
    }

    /// True when no mode carries a time-dependent envelope.
    pub fn is_static(&self) -> bool {
        self.modes.iter().all(|m| {
            m.amplitude == 0.0
                || matches!(m.envelope, Envelope::Constant)
                || matches!(m.envelope, Envelope::Decay { rate } if rate == 0.0)
                || matches!(m.envelope, Envelope::Oscillate { omega } if omega == 0.0)
        })
    }

    pub fn validate(&self, dim: usize) -> Result<(), PotentialError> {
        for (i, m) in self.modes.iter().enumerate() {
            let bad = |reason: String| Err(PotentialError::InvalidMode { mode: i, reason });
            if !m.amplitude.is_finite() {
                return bad("amplitude must be finite".into());
            }
            match &m.profile {
                Profile::Fourier { wavevector, phases } => {
                    if wavevector.len() != dim || phases.len() != dim {
                        return bad(format!("fourier mode needs {dim} wavenumbers and phases"));
                    }
                }
                Profile::Bump { center, width } => {
                    if center.len() != dim {
                        return bad(format!("bump centre needs {dim} coordinates"));
                    }
                    if !(width.is_finite() && *width > 0.0) {
                        return bad("bump width must be positive".into());
                    }
                }
            }
            match m.envelope {
                Envelope::Decay { rate } if !rate.is_finite() => return bad("decay rate must be finite".into()),
                Envelope::Oscillate { omega } if !omega.is_finite() => return bad("omega must be finite".into()),
                _ => {}
            }
        }
        if let Some(h) = self.horizon {
            if !(h.is_finite() && h >= 0.0) {
                return Err(PotentialError::InvalidHorizon(h));
            }
        }
        Ok(())
    }

    fn check_time(&self, t: f64) -> Result<(), PotentialError> {
        let horizon = self.horizon.unwrap_or(f64::INFINITY);
        if !(t >= 0.0 && t <= horizon) {
            return Err(PotentialError::OutsideHorizon { t, horizon });
        }
        Ok(())
    }

    /// Samples of `V(., t)` only.
    pub fn sample(&self, grid: &Grid, t: f64) -> Result<ScalarField, PotentialError> {
        self.validate(grid.dim())?;
        self.check_time(t)?;
        let mut values = vec![0.0; grid.len()];
        for m in &self.modes {
            let (e, _) = m.envelope.value(t);
            for (idx, out) in values.iter_mut().enumerate() {
                let x = grid.coords(idx);
                let shape: f64 = (0..grid.dim()).map(|a| axis_factor(&m.profile, a, x[a], grid.side(a)).0).product();
                *out += m.amplitude * e * shape;
            }
        }
        Ok(ScalarField::new(*grid, values)?)
    }

    /// Exact `V`, `grad V`, `Lap V`, `D^2 V` and `dV/dt` on the grid at time `t`.
    pub fn eval(&self, grid: &Grid, t: f64) -> Result<PotentialFields, PotentialError> {
        self.validate(grid.dim())?;
        self.check_time(t)?;
        let d = grid.dim();
        let len = grid.len();
        let mut v = vec![0.0; len];
        let mut dtv = vec![0.0; len];
        let mut grad = vec![vec![0.0; len]; d];
        let mut hess = vec![vec![0.0; len]; d * d];
        for m in &self.modes {
            let (e, de) = m.envelope.value(t);
            for idx in 0..len {
                let x = grid.coords(idx);
                let mut f = [(1.0, 0.0, 0.0); 2];
                for a in 0..d {
                    f[a] = axis_factor(&m.profile, a, x[a], grid.side(a));
                }
                let shape: f64 = f[..d].iter().map(|t| t.0).product();
                v[idx] += m.amplitude * e * shape;
                dtv[idx] += m.amplitude * de * shape;
                for a in 0..d {
                    let others: f64 = (0..d).filter(|&b| b != a).map(|b| f[b].0).product();
                    grad[a][idx] += m.amplitude * e * f[a].1 * others;
                    hess[a * d + a][idx] += m.amplitude * e * f[a].2 * others;
                }
                if d == 2 {
                    let mixed = m.amplitude * e * f[0].1 * f[1].1;
                    hess[1][idx] += mixed;
                    hess[2][idx] += mixed;
                }
            }
        }
        let hess = TensorField::new(*grid, hess)?;
        let lap = hess.trace();
        Ok(PotentialFields {
            v: ScalarField::new(*grid, v)?,
            grad: VectorField::new(*grid, grad)?,
            lap,
            hess,
            dt: ScalarField::new(*grid, dtv)?,
        })
    }
}

/// Space-time norms of a potential over `[0, T]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PotentialBudget {
    pub horizon: f64,
    /// `||V||_{L^inf_{t,x}}`
    pub sup_v: f64,
    /// `||dV/dt||_{L^1_t L^inf_x}`
    pub dt_v_l1_linf: f64,
    /// `||Lap V||_{L^2_t L^2_x}`
    pub lap_v_l2_l2: f64,
    /// `||D^2 V||_{L^2_t L^2_x}`
    pub hess_v_l2_l2: f64,
    /// `||dV/dt||_{L^2_t L^2_x}`
    pub dt_v_l2_l2: f64,
    /// `||grad V||_{L^2_t L^2_x}`
    pub grad_v_l2_l2: f64,
    /// `||grad V||_{L^4_t L^4_x}`
    pub grad_v_l4_l4: f64,
    /// `||nu Lap V + dV/dt||_{L^1_t L^inf_x}`
    pub drift_source_l1_linf: f64,
}

impl PotentialBudget {
    pub fn zero(horizon: f64) -> Self {
        Self {
            horizon,
            sup_v: 0.0,
            dt_v_l1_linf: 0.0,
            lap_v_l2_l2: 0.0,
            hess_v_l2_l2: 0.0,
            dt_v_l2_l2: 0.0,
            grad_v_l2_l2: 0.0,
            grad_v_l4_l4: 0.0,
            drift_source_l1_linf: 0.0,
        }
    }
}

/// Trapezoid rule on uniformly spaced samples.
pub(crate) fn trapezoid(values: &[f64], spacing: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => spacing * (0.5 * (values[0] + values[n - 1]) + values[1..n - 1].iter().sum::<f64>()),
    }
}

/// Budget of `spec` over `[0, horizon]` using `time_samples` uniform instants.
pub fn assemble_budget(
    spec: &PotentialSpec,
    grid: &Grid,
    horizon: f64,
    time_samples: usize,
    nu: f64,
) -> Result<PotentialBudget, PotentialError> {
    if time_samples < MIN_TIME_SAMPLES {
        return Err(PotentialError::TooFewSamples(time_samples));
    }
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(PotentialError::InvalidHorizon(horizon));
    }
    let spec = PotentialSpec { modes: spec.modes.clone(), horizon: None };
    let dt = horizon / (time_samples - 1) as f64;
    let mut sup_v: f64 = 0.0;
    let mut series = vec![Vec::with_capacity(time_samples); 7];
    for j in 0..time_samples {
        let t = j as f64 * dt;
        let f = spec.eval(grid, t)?;
        sup_v = sup_v.max(max_abs(&f.v));
        let grad_sq = f.grad.norm_squared();
        let source = f.lap.zip_map(&f.dt, |l, d| nu * l + d)?;
        series[0].push(max_abs(&f.dt));
        series[1].push(integrate(&f.lap.map(|x| x * x)));
        series[2].push(integrate(&f.hess.frobenius_squared()));
        series[3].push(integrate(&f.dt.map(|x| x * x)));
        series[4].push(integrate(&grad_sq));
        series[5].push(integrate(&grad_sq.map(|x| x * x)));
        series[6].push(max_abs(&source));
    }
    let acc = |i: usize| trapezoid(&series[i], dt);
    Ok(PotentialBudget {
        horizon,
        sup_v,
        dt_v_l1_linf: acc(0),
        lap_v_l2_l2: acc(1).sqrt(),
        hess_v_l2_l2: acc(2).sqrt(),
        dt_v_l2_l2: acc(3).sqrt(),
        grad_v_l2_l2: acc(4).sqrt(),
        grad_v_l4_l4: acc(5).powf(0.25),
        drift_source_l1_linf: acc(6),
    })
}
