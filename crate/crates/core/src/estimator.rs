//! Regularity functionals of a solution, their time integrals, and the
//! computable a priori bounds they must satisfy.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{energy_gamma, energy_infinity, ConstitutiveError, MediumParams};
use crate::grid::{gradient, hessian, integrate, laplacian, GridError, ScalarField, Scheme};
use crate::potential::{PotentialBudget, PotentialError, PotentialSpec};
use crate::solver::SimState;

/// Relative slack granted to the comparison and Lipschitz-type bounds.
pub const BOUND_SLACK: f64 = 0.02;
/// Relative slack for the integrated gradient bound and the `|grad p|^4` inequality.
pub const INTEGRAL_SLACK: f64 = 0.05;
/// Allowed energy increase between samples, relative to `1 + |E|`.
pub const ENERGY_SLACK: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error("series is empty")]
    EmptySeries,
}

/// Functionals of one state. Integrals are over the torus.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnapshotRow {
    pub t: f64,
    pub mass: f64,
    pub p_sup: f64,
    pub n_sup: f64,
    /// `int p`
    pub p_integral: f64,
    /// `int |grad p|^2`
    pub grad_p_l2: f64,
    /// `int |grad p|^4`
    pub grad_p_l4: f64,
    /// `int p |D^2 p|^2`
    pub p_hess_p: f64,
    /// `int p |Lap p|^2`
    pub p_lap_p: f64,
    /// `int p^2 |Lap p|^2`
    pub p2_lap_p: f64,
    /// `int p^2 |D^2 p|^2`
    pub p2_hess_p: f64,
    /// `int |grad Sigma|^2`
    pub grad_sigma_l2: f64,
    /// `int |grad Sigma|^4`
    pub grad_sigma_l4: f64,
    /// `int |Lap Sigma|^2`
    pub lap_sigma_l2: f64,
    /// `gamma int p |Lap(p + V)|^2`
    pub weighted_drift: f64,
    /// `int p (1 - n)_+`
    pub complementarity: f64,
    /// `sup (n - 1)_+`
    pub overshoot: f64,
    pub energy_gamma: f64,
    /// `energy_gamma + nu int n ln n`, the dissipated energy when `V` is static.
    pub energy_total: f64,
    /// Hard-congestion energy, `+inf` when `n > 1` somewhere.
    pub energy_infinity: f64,
}

/// Column names of [`SnapshotRow::values`], in order.
pub const SERIES_COLUMNS: [&str; 21] = [
    "t",
    "mass",
    "p_sup",
    "n_sup",
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
    "overshoot",
    "energy_gamma",
    "energy_total",
    "energy_infinity",
    "energy_infinity_finite",
];

impl SnapshotRow {
    pub fn values(&self) -> [f64; 21] {
        [
            self.t,
            self.mass,
            self.p_sup,
            self.n_sup,
            self.p_integral,
            self.grad_p_l2,
            self.grad_p_l4,
            self.p_hess_p,
            self.p_lap_p,
            self.p2_lap_p,
            self.p2_hess_p,
            self.grad_sigma_l2,
            self.grad_sigma_l4,
            self.lap_sigma_l2,
            self.weighted_drift,
            self.complementarity,
            self.overshoot,
            self.energy_gamma,
            self.energy_total,
            self.energy_infinity,
            if self.energy_infinity.is_finite() { 1.0 } else { 0.0 },
        ]
    }

    /// Inverse of [`SnapshotRow::values`].
    pub fn from_values(v: &[f64]) -> Option<Self> {
        if v.len() != SERIES_COLUMNS.len() {
            return None;
        }
        Some(Self {
            t: v[0],
            mass: v[1],
            p_sup: v[2],
            n_sup: v[3],
            p_integral: v[4],
            grad_p_l2: v[5],
            grad_p_l4: v[6],
            p_hess_p: v[7],
            p_lap_p: v[8],
            p2_lap_p: v[9],
            p2_hess_p: v[10],
            grad_sigma_l2: v[11],
            grad_sigma_l4: v[12],
            lap_sigma_l2: v[13],
            weighted_drift: v[14],
            complementarity: v[15],
            overshoot: v[16],
            energy_gamma: v[17],
            energy_total: v[18],
            energy_infinity: v[19],
        })
    }
}

/// `(int p (1 - n)_+, sup (n - 1)_+)`.
pub fn complementarity_residual(n: &ScalarField, p: &ScalarField) -> Result<(f64, f64), EstimatorError> {
    let residual = p.zip_map(n, |p, n| p * (1.0 - n).max(0.0))?;
    let overshoot = n.values().iter().fold(0.0f64, |m, &v| m.max(v - 1.0));
    Ok((integrate(&residual), overshoot))
}

fn squared(f: &ScalarField) -> ScalarField {
    f.map(|x| x * x)
}

/// All functionals of `state` with centred differences, `V` taken at time `t`.
pub fn snapshot_functionals(state: &SimState, potential: &PotentialSpec, t: f64) -> Result<SnapshotRow, EstimatorError> {
    let scheme = Scheme::Centered2;
    let params = state.params();
    let (n, p, sigma) = (state.density(), state.pressure(), state.sigma());
    let grid = *n.grid();
    let pot = PotentialSpec { modes: potential.modes.clone(), horizon: None };
    let v = pot.eval(&grid, t)?;

    let grad_p = gradient(p, scheme)?.norm_squared();
    let hess_p = hessian(p, scheme)?;
    let hess_p_sq = hess_p.frobenius_squared();
    let lap_p = hess_p.trace();
    let grad_sigma = gradient(sigma, scheme)?.norm_squared();
    let lap_sigma = laplacian(sigma, scheme)?;

    let weighted = |w: &ScalarField, f: &ScalarField, power: i32| -> Result<f64, EstimatorError> {
        Ok(integrate(&w.zip_map(f, |w, f| w.powi(power) * f)?))
    };
    let lap_total = lap_p.zip_map(&v.lap, |a, b| a + b)?;
    let (complementarity, overshoot) = complementarity_residual(n, p)?;
    let e_gamma = energy_gamma(n, &v.v, params)?;
    let entropy = integrate(&n.map(|x| if x > 0.0 { x * x.ln() } else { 0.0 }));

    Ok(SnapshotRow {
        t,
        mass: integrate(n),
        p_sup: p.max().max(0.0),
        n_sup: n.max().max(0.0),
        p_integral: integrate(p),
        grad_p_l2: integrate(&grad_p),
        grad_p_l4: integrate(&squared(&grad_p)),
        p_hess_p: weighted(p, &hess_p_sq, 1)?,
        p_lap_p: weighted(p, &squared(&lap_p), 1)?,
        p2_lap_p: weighted(p, &squared(&lap_p), 2)?,
        p2_hess_p: weighted(p, &hess_p_sq, 2)?,
        grad_sigma_l2: integrate(&grad_sigma),
        grad_sigma_l4: integrate(&squared(&grad_sigma)),
        lap_sigma_l2: integrate(&squared(&lap_sigma)),
        weighted_drift: params.gamma() * weighted(p, &squared(&lap_total), 1)?,
        complementarity,
        overshoot,
        energy_gamma: e_gamma,
        energy_total: e_gamma + params.nu() * entropy,
        energy_infinity: energy_infinity(n, &v.v)?.as_f64(),
    })
}

/// Snapshot rows at increasing sample times.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateSeries {
    pub rows: Vec<SnapshotRow>,
}

/// Time integrals `int_0^T` of the space integrals in a series.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Accumulated {
    pub horizon: f64,
    pub p_integral: f64,
    pub grad_p_l2: f64,
    pub grad_p_l4: f64,
    pub p_hess_p: f64,
    pub p_lap_p: f64,
    pub p2_lap_p: f64,
    pub p2_hess_p: f64,
    pub grad_sigma_l2: f64,
    pub grad_sigma_l4: f64,
    pub lap_sigma_l2: f64,
    pub weighted_drift: f64,
    pub complementarity: f64,
}

impl EstimateSeries {
    pub fn push(&mut self, row: SnapshotRow) {
        self.rows.push(row);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Running trapezoid integral of one column; entry `k` covers `[t_0, t_k]`.
    pub fn cumulative(&self, column: impl Fn(&SnapshotRow) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows.len());
        let mut acc = 0.0;
        for (k, row) in self.rows.iter().enumerate() {
            if k > 0 {
                let prev = &self.rows[k - 1];
                acc += 0.5 * (row.t - prev.t) * (column(row) + column(prev));
            }
            out.push(acc);
        }
        out
    }

    fn integral(&self, column: impl Fn(&SnapshotRow) -> f64) -> f64 {
        self.cumulative(column).last().copied().unwrap_or(0.0)
    }

    pub fn accumulate(&self) -> Accumulated {
        let horizon = match (self.rows.first(), self.rows.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        };
        Accumulated {
            horizon,
            p_integral: self.integral(|r| r.p_integral),
            grad_p_l2: self.integral(|r| r.grad_p_l2),
            grad_p_l4: self.integral(|r| r.grad_p_l4),
            p_hess_p: self.integral(|r| r.p_hess_p),
            p_lap_p: self.integral(|r| r.p_lap_p),
            p2_lap_p: self.integral(|r| r.p2_lap_p),
            p2_hess_p: self.integral(|r| r.p2_hess_p),
            grad_sigma_l2: self.integral(|r| r.grad_sigma_l2),
            grad_sigma_l4: self.integral(|r| r.grad_sigma_l4),
            lap_sigma_l2: self.integral(|r| r.lap_sigma_l2),
            weighted_drift: self.integral(|r| r.weighted_drift),
            complementarity: self.integral(|r| r.complementarity),
        }
    }

    pub fn max_of(&self, column: impl Fn(&SnapshotRow) -> f64) -> f64 {
        self.rows.iter().map(column).fold(0.0, f64::max)
    }
}

/// Norms of the initial data entering the bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitialNorms {
    pub p_sup: f64,
    pub p_integral: f64,
}

impl InitialNorms {
    pub fn from_series(series: &EstimateSeries) -> Result<Self, EstimatorError> {
        let first = series.rows.first().ok_or(EstimatorError::EmptySeries)?;
        Ok(Self { p_sup: first.p_sup, p_integral: first.p_integral })
    }
}

/// One inequality `lhs <= rhs` together with the slack it was granted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Absolute slack added to `rhs`.
    pub slack: f64,
    /// `rhs + slack - lhs`
    pub margin: f64,
    pub passed: bool,
}

impl BoundCheck {
    fn new(name: &str, lhs: f64, rhs: f64, slack: f64) -> Self {
        let margin = rhs + slack - lhs;
        Self { name: name.to_string(), lhs, rhs, slack, margin, passed: margin >= 0.0 && lhs.is_finite() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub checks: Vec<BoundCheck>,
}

impl BoundReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&BoundCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Whether the potential has no spatial or temporal variation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PotentialShape {
    pub is_zero: bool,
    pub is_static: bool,
}

impl PotentialShape {
    pub fn of(spec: &PotentialSpec) -> Self {
        Self { is_zero: spec.is_zero(), is_static: spec.is_static() }
    }
}

/// Evaluates every checkable inequality on a complete series.
pub fn bound_checks(
    series: &EstimateSeries,
    budget: &PotentialBudget,
    params: &MediumParams,
    initial: &InitialNorms,
    shape: PotentialShape,
) -> BoundReport {
    let mut checks = Vec::new();
    if series.is_empty() {
        return BoundReport { checks };
    }
    let gamma = params.gamma();
    let p_max = series.max_of(|r| r.p_sup);

    if params.nu() == 0.0 {
        let rhs = initial.p_sup + 2.0 * budget.sup_v + budget.dt_v_l1_linf;
        checks.push(BoundCheck::new("pressure_sup_comparison", p_max, rhs, BOUND_SLACK * rhs));
    } else {
        let c_star = initial.p_sup + 2.0 * budget.sup_v + budget.drift_source_l1_linf;
        checks.push(BoundCheck::new("pressure_sup_c_star", p_max, c_star, BOUND_SLACK * c_star));
        let n_bound = c_star.powf(1.0 / gamma);
        let n_max = series.max_of(|r| r.n_sup);
        checks.push(BoundCheck::new("density_sup_c_star", n_max, n_bound, BOUND_SLACK * n_bound));
    }

    if shape.is_zero {
        let rise = series.rows.windows(2).map(|w| w[1].p_sup - w[0].p_sup).fold(0.0, f64::max);
        checks.push(BoundCheck::new("pressure_sup_nonincreasing", rise, 0.0, 1e-8 * initial.p_sup.max(1.0)));
    }

    let acc = series.accumulate();
    let rhs = budget.grad_v_l2_l2.powi(2) + 2.0 * initial.p_integral / (gamma - 1.0);
    checks.push(BoundCheck::new("pressure_gradient_l2", acc.grad_p_l2, rhs, INTEGRAL_SLACK * rhs));

    let (mut worst_lhs, mut worst_rhs, mut worst_ratio) = (0.0, 0.0, f64::NEG_INFINITY);
    for r in &series.rows {
        let rhs = 8.0 * r.p2_lap_p + 4.0 * r.p2_hess_p;
        let ratio = if rhs > 0.0 { r.grad_p_l4 / rhs } else if r.grad_p_l4 > 0.0 { f64::INFINITY } else { 0.0 };
        if ratio > worst_ratio {
            (worst_lhs, worst_rhs, worst_ratio) = (r.grad_p_l4, rhs, ratio);
        }
    }
    checks.push(BoundCheck::new("gradient_fourth_power", worst_lhs, worst_rhs, INTEGRAL_SLACK * worst_rhs));

    if shape.is_static {
        // worst increase between samples, measured against its own allowance
        let (mut rise, mut allowed) = (0.0, ENERGY_SLACK);
        for w in series.rows.windows(2) {
            let d = w[1].energy_total - w[0].energy_total;
            let a = ENERGY_SLACK * (1.0 + w[0].energy_total.abs());
            if d - a > rise - allowed {
                (rise, allowed) = (d, a);
            }
        }
        checks.push(BoundCheck::new("energy_nonincreasing", rise, 0.0, allowed));
    }
    BoundReport { checks }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::profiles::Barenblatt;
    use crate::solver::SimState;

    fn state(n: ScalarField, gamma: f64, nu: f64) -> SimState {
        SimState::new(n, MediumParams::new(gamma, nu).unwrap(), 0.0).unwrap()
    }

    #[test]
    fn vacuum_row_is_zero() {
        let g = Grid::new_2d(16, 1.0).unwrap();
        let row = snapshot_functionals(&state(ScalarField::zeros(g), 3.0, 0.0), &PotentialSpec::zero(), 0.0).unwrap();
        let vals = row.values();
        assert!(vals[..20].iter().all(|&v| v == 0.0), "{row:?}");
        assert_eq!(vals[20], 1.0);
    }

    #[test]
    fn saturated_row() {
        let g = Grid::new_2d(16, 2.0).unwrap();
        let row = snapshot_functionals(&state(ScalarField::constant(g, 1.0), 5.0, 0.0), &PotentialSpec::zero(), 0.0).unwrap();
        assert!((row.mass - 4.0).abs() < 1e-13);
        assert_eq!(row.p_sup, 1.0);
        assert_eq!(row.grad_p_l2, 0.0);
        assert_eq!(row.p_hess_p, 0.0);
        assert_eq!(row.complementarity, 0.0);
        assert_eq!(row.overshoot, 0.0);
    }

    #[test]
    fn complementarity_decreases_in_gamma() {
        let g = Grid::new_1d(16, 1.0).unwrap();
        let n = ScalarField::constant(g, 0.9);
        let mut last = f64::INFINITY;
        for gamma in [2.0, 5.0, 10.0, 40.0] {
            let p = n.map(|v| v.powf(gamma));
            let (r, over) = complementarity_residual(&n, &p).unwrap();
            assert!((r - 0.9f64.powf(gamma) * 0.1).abs() < 1e-14);
            assert!(r < last);
            assert_eq!(over, 0.0);
            last = r;
        }
    }

    #[test]
    fn barenblatt_gradient_integral() {
        let g = Grid::new_2d(256, 2.0).unwrap();
        let b = Barenblatt::new(2, 2.0, 0.1).unwrap();
        let t = 0.1;
        let n = ScalarField::from_fn(g, |x| b.density(((x[0] - 1.0).powi(2) + (x[1] - 1.0).powi(2)).sqrt(), t));
        let row = snapshot_functionals(&state(n, 2.0, 0.0), &PotentialSpec::zero(), t).unwrap();
        let exact = b.grad_pressure_l2_squared(t);
        assert!((row.grad_p_l2 - exact).abs() < 0.02 * exact, "{} vs {exact}", row.grad_p_l2);
    }

    #[test]
    fn accumulation_is_monotone_trapezoid() {
        let mut s = EstimateSeries::default();
        let g = Grid::new_1d(8, 1.0).unwrap();
        let base = snapshot_functionals(&state(ScalarField::constant(g, 0.5), 2.0, 0.0), &PotentialSpec::zero(), 0.0).unwrap();
        for k in 0..5 {
            s.push(SnapshotRow { t: k as f64 * 0.5, grad_p_l2: k as f64, ..base });
        }
        let cum = s.cumulative(|r| r.grad_p_l2);
        assert!(cum.windows(2).all(|w| w[1] >= w[0]));
        // int_0^2 2t dt = 4, exact for linear integrands
        assert!((s.accumulate().grad_p_l2 - 4.0).abs() < 1e-14);
    }

    #[test]
    fn empty_data_passes_trivially() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let row = snapshot_functionals(&state(ScalarField::zeros(g), 2.0, 0.0), &PotentialSpec::zero(), 0.0).unwrap();
        let series = EstimateSeries { rows: vec![row, SnapshotRow { t: 1.0, ..row }] };
        let init = InitialNorms::from_series(&series).unwrap();
        let report = bound_checks(
            &series,
            &PotentialBudget::zero(1.0),
            &MediumParams::new(2.0, 0.0).unwrap(),
            &init,
            PotentialShape { is_zero: true, is_static: true },
        );
        assert!(report.all_passed(), "{report:?}");
        assert!(report.checks.iter().all(|c| c.lhs == 0.0));
    }

    #[test]
    fn row_values_round_trip() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let n = ScalarField::from_fn(g, |x| 0.5 + 0.3 * (6.0 * x[0]).sin());
        let row = snapshot_functionals(&state(n, 3.0, 0.4), &PotentialSpec::zero(), 0.0).unwrap();
        assert_eq!(SnapshotRow::from_values(&row.values()), Some(row));
    }
}
