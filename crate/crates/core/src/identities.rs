//! Integral identities for smooth periodic fields, checked numerically:
//!
//! * `int |grad g|^2 Lap g = -2/3 int g |Lap g|^2 + 2/3 int g |D^2 g|^2`
//! * `int |grad g|^4 <= 8 int g^2 |Lap g|^2 + 4 int g^2 |D^2 g|^2`
//! * `int Lap h |grad g|^2 = int h |D^2 g|^2 - h |Lap g|^2 + grad g . D^2 h grad g`
//!
//! Spectral derivatives give near machine accuracy for band-limited fields;
//! the centred scheme shows the second-order error the estimator carries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{gradient, hessian, integrate, max_wavenumber, Grid, GridError, ScalarField, Scheme};
use crate::potential::{Envelope, Mode, Phase, PotentialError, PotentialSpec, Profile};

/// Tolerance of the spectral checks, relative to `1 + |lhs|`.
pub const IDENTITY_TOL: f64 = 1e-9;
/// Centred-difference residuals below this (relative to `1 + |lhs|`) count as
/// rounding noise when estimating convergence orders.
pub const FD_FLOOR: f64 = 1e-11;
/// Smallest observed order accepted for centred-difference residuals.
pub const MIN_FD_ORDER: f64 = 1.9;

/// Spectral coefficients below this fraction of the peak are ignored when
/// measuring the band limit.
const BAND_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum IdentityError {
    #[error("field has wavenumber {wavenumber}, needs fewer than {limit} for {cells} cells")]
    UnderResolved { wavenumber: usize, limit: usize, cells: usize },
    #[error("fields live on different grids")]
    GridMismatch,
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Potential(#[from] PotentialError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub abs_err: f64,
}

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64) -> Self {
        Self { lhs, rhs, abs_err: (lhs - rhs).abs() }
    }

    /// `abs_err <= tol (1 + |lhs|)`
    pub fn holds(&self, tol: f64) -> bool {
        self.abs_err <= tol * (1.0 + self.lhs.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs - lhs`
    pub slack: f64,
}

impl InequalityCheck {
    pub fn holds(&self, tol: f64) -> bool {
        self.slack >= -tol * (1.0 + self.rhs.abs())
    }
}

/// Products of up to four fields must stay alias-free, so spectral checks
/// need every wavenumber below a quarter of the cell count.
fn check_band(f: &ScalarField, scheme: Scheme) -> Result<(), IdentityError> {
    if scheme != Scheme::Spectral {
        return Ok(());
    }
    let g = f.grid();
    let cells = (0..g.dim()).map(|a| g.cells(a)).min().unwrap_or(0);
    let limit = cells / 4;
    let wavenumber = max_wavenumber(f, BAND_TOL)?;
    if wavenumber >= limit {
        return Err(IdentityError::UnderResolved { wavenumber, limit, cells });
    }
    Ok(())
}

fn product(a: &ScalarField, b: &ScalarField) -> Result<ScalarField, GridError> {
    a.zip_map(b, |x, y| x * y)
}

pub fn check_gradient_laplacian(g: &ScalarField, scheme: Scheme) -> Result<IdentityCheck, IdentityError> {
    check_band(g, scheme)?;
    let grad_sq = gradient(g, scheme)?.norm_squared();
    let hess = hessian(g, scheme)?;
    let lap = hess.trace();
    let lhs = integrate(&product(&grad_sq, &lap)?);
    let lap_term = integrate(&g.zip_map(&lap, |g, l| g * l * l)?);
    let hess_term = integrate(&product(g, &hess.frobenius_squared())?);
    Ok(IdentityCheck::new(lhs, -2.0 / 3.0 * lap_term + 2.0 / 3.0 * hess_term))
}

pub fn check_gradient_fourth(g: &ScalarField, scheme: Scheme) -> Result<InequalityCheck, IdentityError> {
    check_band(g, scheme)?;
    let grad_sq = gradient(g, scheme)?.norm_squared();
    let hess = hessian(g, scheme)?;
    let lap = hess.trace();
    let lhs = integrate(&grad_sq.map(|x| x * x));
    let lap_term = integrate(&g.zip_map(&lap, |g, l| g * g * l * l)?);
    let hess_term = integrate(&g.zip_map(&hess.frobenius_squared(), |g, h| g * g * h)?);
    let rhs = 8.0 * lap_term + 4.0 * hess_term;
    Ok(InequalityCheck { lhs, rhs, slack: rhs - lhs })
}

pub fn check_weighted_hessian(g: &ScalarField, h: &ScalarField, scheme: Scheme) -> Result<IdentityCheck, IdentityError> {
    if g.grid() != h.grid() {
        return Err(IdentityError::GridMismatch);
    }
    check_band(g, scheme)?;
    check_band(h, scheme)?;
    let grad_g = gradient(g, scheme)?;
    let hess_g = hessian(g, scheme)?;
    let hess_h = hessian(h, scheme)?;
    let lap_h = hess_h.trace();
    let lhs = integrate(&product(&lap_h, &grad_g.norm_squared())?);
    let lap_g = hess_g.trace();
    let curvature = hess_g.frobenius_squared().zip_map(&lap_g, |f, l| f - l * l)?;
    let rhs = integrate(&product(h, &curvature)?) + integrate(&hess_h.quadratic_form(&grad_g)?);
    Ok(IdentityCheck::new(lhs, rhs))
}

/// Constant plus a sum of static Fourier product modes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedField {
    pub offset: f64,
    pub modes: Vec<Mode>,
}

impl ManufacturedField {
    pub fn constant(offset: f64) -> Self {
        Self { offset, modes: Vec::new() }
    }

    pub fn sample(&self, grid: &Grid) -> Result<ScalarField, IdentityError> {
        let spec = PotentialSpec { modes: self.modes.clone(), horizon: None };
        let offset = self.offset;
        Ok(spec.sample(grid, 0.0)?.map(|v| v + offset))
    }

    /// Random field with wavenumbers up to `kmax`, shifted to be at least 1.
    fn random(rng: &mut ChaCha8Rng, dim: usize, kmax: i32, count: usize) -> Self {
        let mut modes = Vec::with_capacity(count);
        let mut total = 0.0;
        for _ in 0..count {
            let wavevector: Vec<i32> = (0..dim).map(|_| rng.gen_range(0..=kmax)).collect();
            let phases = (0..dim).map(|_| if rng.gen_bool(0.5) { Phase::Cos } else { Phase::Sin }).collect();
            let amplitude: f64 = rng.gen_range(-1.0..1.0);
            total += amplitude.abs();
            modes.push(Mode { amplitude, profile: Profile::Fourier { wavevector, phases }, envelope: Envelope::Constant });
        }
        Self { offset: 1.0 + total, modes }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManufacturedPair {
    pub id: usize,
    pub g: ManufacturedField,
    pub h: ManufacturedField,
}

/// Deterministic corpus of `count` random pairs with wavenumbers up to 3.
pub fn manufactured_corpus(dim: usize, count: usize, seed: u64) -> Vec<ManufacturedPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|id| {
            let ng = rng.gen_range(1..=4);
            let nh = rng.gen_range(1..=4);
            let g = ManufacturedField::random(&mut rng, dim, 3, ng);
            let h = ManufacturedField::random(&mut rng, dim, 3, nh);
            ManufacturedPair { id, g, h }
        })
        .collect()
}

/// Results of the three checks for one pair at one resolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusRow {
    pub pair: usize,
    pub cells: usize,
    pub gradient_laplacian: IdentityCheck,
    pub gradient_fourth: InequalityCheck,
    pub weighted_hessian: IdentityCheck,
}

impl CorpusRow {
    pub fn passed(&self, tol: f64) -> bool {
        self.gradient_laplacian.holds(tol) && self.gradient_fourth.holds(tol) && self.weighted_hessian.holds(tol)
    }
}

fn evaluate_pair(pair: &ManufacturedPair, grid: &Grid, scheme: Scheme) -> Result<CorpusRow, IdentityError> {
    let g = pair.g.sample(grid)?;
    let h = pair.h.sample(grid)?;
    Ok(CorpusRow {
        pair: pair.id,
        cells: grid.cells(0),
        gradient_laplacian: check_gradient_laplacian(&g, scheme)?,
        gradient_fourth: check_gradient_fourth(&g, scheme)?,
        weighted_hessian: check_weighted_hessian(&g, &h, scheme)?,
    })
}

/// Checks every pair on the unit torus with `cells` per axis; ordered by pair.
pub fn run_corpus(
    corpus: &[ManufacturedPair],
    dim: usize,
    cells: usize,
    scheme: Scheme,
) -> Result<Vec<CorpusRow>, IdentityError> {
    let grid = Grid::new(dim, &[cells; 2][..dim], &[1.0; 2][..dim])?;
    corpus.par_iter().map(|p| evaluate_pair(p, &grid, scheme)).collect()
}

/// Centred-difference residuals of one identity under refinement.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FdConvergence {
    pub pair: usize,
    pub identity: String,
    pub cells: Vec<usize>,
    pub residuals: Vec<f64>,
    /// `log2(r_k / r_{k+1})` for consecutive resolutions.
    pub orders: Vec<f64>,
    pub passed: bool,
}

fn convergence(pair: usize, identity: &str, cells: &[usize], checks: &[IdentityCheck]) -> FdConvergence {
    let residuals: Vec<f64> = checks.iter().map(|c| c.abs_err).collect();
    let orders: Vec<f64> = residuals.windows(2).map(|w| (w[0] / w[1]).log2()).collect();
    let passed = checks.windows(2).zip(&orders).all(|(w, &order)| {
        let floor = |c: &IdentityCheck| c.abs_err <= FD_FLOOR * (1.0 + c.lhs.abs());
        order >= MIN_FD_ORDER || floor(&w[1])
    });
    FdConvergence { pair, identity: identity.to_string(), cells: cells.to_vec(), residuals, orders, passed }
}

/// Observed order of the centred-difference residuals of both identities.
pub fn fd_convergence(
    corpus: &[ManufacturedPair],
    dim: usize,
    resolutions: &[usize],
) -> Result<Vec<FdConvergence>, IdentityError> {
    let per_level: Vec<Vec<CorpusRow>> = resolutions
        .iter()
        .map(|&n| run_corpus(corpus, dim, n, Scheme::Centered2))
        .collect::<Result<_, _>>()?;
    let mut out = Vec::with_capacity(2 * corpus.len());
    for (i, pair) in corpus.iter().enumerate() {
        let c_lap: Vec<IdentityCheck> = per_level.iter().map(|rows| rows[i].gradient_laplacian).collect();
        let c_hess: Vec<IdentityCheck> = per_level.iter().map(|rows| rows[i].weighted_hessian).collect();
        out.push(convergence(pair.id, "gradient_laplacian", resolutions, &c_lap));
        out.push(convergence(pair.id, "weighted_hessian", resolutions, &c_hess));
    }
    Ok(out)
}
