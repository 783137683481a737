//! Pointwise constitutive maps: density, pressure `p = n^gamma`, and
//! `Sigma(n) = gamma/(gamma+1) n^(gamma+1) + nu n`.
//!
//! Powers are evaluated as `exp(gamma ln n)` with an explicit zero branch, so
//! large exponents underflow cleanly to 0 for `n < 1`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{integrate, GridError, ScalarField};

/// Negative densities down to this value are clamped to zero.
pub const NEGATIVE_TOLERANCE: f64 = -1e-12;

/// Density above which the hard-congestion energy is infinite.
pub const CONGESTION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ConstitutiveError {
    #[error("invalid medium parameters: {0}")]
    InvalidParams(String),
    #[error("negative density {0}")]
    NegativeDensity(f64),
    #[error("the limit pressure (Sigma - nu)_+ needs nu > 0")]
    UnsupportedNu,
    #[error("cannot invert Sigma at value {0}")]
    Inversion(f64),
    #[error(transparent)]
    Grid(#[from] GridError),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumParams {
    gamma: f64,
    nu: f64,
}

impl MediumParams {
    pub fn new(gamma: f64, nu: f64) -> Result<Self, ConstitutiveError> {
        if !(gamma.is_finite() && gamma > 1.0) {
            return Err(ConstitutiveError::InvalidParams(format!("gamma must be finite and > 1, got {gamma}")));
        }
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(ConstitutiveError::InvalidParams(format!("nu must be finite and >= 0, got {nu}")));
        }
        Ok(Self { gamma, nu })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }
}

fn checked_density(n: f64) -> Result<f64, ConstitutiveError> {
    if n.is_nan() || n < NEGATIVE_TOLERANCE {
        return Err(ConstitutiveError::NegativeDensity(n));
    }
    Ok(n.max(0.0))
}

/// `n^e` via `exp(e ln n)`; exactly 0 at `n = 0`.
#[inline]
pub(crate) fn power(n: f64, e: f64) -> f64 {
    if n <= 0.0 {
        0.0
    } else {
        (e * n.ln()).exp()
    }
}

pub fn pressure_of_density(n: f64, params: &MediumParams) -> Result<f64, ConstitutiveError> {
    Ok(power(checked_density(n)?, params.gamma))
}

/// Inverse pressure law `n = p^(1/gamma)`.
pub fn density_of_pressure(p: f64, params: &MediumParams) -> Result<f64, ConstitutiveError> {
    if p.is_nan() || p < NEGATIVE_TOLERANCE {
        return Err(ConstitutiveError::InvalidParams(format!("negative pressure {p}")));
    }
    Ok(power(p.max(0.0), 1.0 / params.gamma))
}

pub fn sigma_of_density(n: f64, params: &MediumParams) -> Result<f64, ConstitutiveError> {
    Ok(sigma_unchecked(checked_density(n)?, params))
}

pub fn sigma_prime(n: f64, params: &MediumParams) -> Result<f64, ConstitutiveError> {
    Ok(sigma_prime_unchecked(checked_density(n)?, params))
}

/// Sigma for `n >= 0`; negative arguments are treated as 0 in the nonlinear
/// part and extended linearly with slope `nu`.
#[inline]
pub(crate) fn sigma_unchecked(n: f64, params: &MediumParams) -> f64 {
    let g = params.gamma;
    g / (g + 1.0) * power(n, g + 1.0) + params.nu * n
}

#[inline]
pub(crate) fn sigma_prime_unchecked(n: f64, params: &MediumParams) -> f64 {
    params.gamma * power(n, params.gamma) + params.nu
}

/// Solves `sigma(n) = s` for `n >= 0` by Newton steps safeguarded with bisection.
pub fn density_of_sigma(s: f64, params: &MediumParams) -> Result<f64, ConstitutiveError> {
    if s.is_nan() || s < 0.0 {
        return Err(ConstitutiveError::Inversion(s));
    }
    if s == 0.0 {
        return Ok(0.0);
    }
    // bracket: sigma(1) >= gamma/(gamma+1) and sigma is increasing
    let mut lo = 0.0;
    let mut hi = 1.0;
    while sigma_unchecked(hi, params) < s {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(ConstitutiveError::Inversion(s));
        }
    }
    let mut n = 0.5 * (lo + hi);
    for _ in 0..200 {
        let f = sigma_unchecked(n, params) - s;
        if f > 0.0 {
            hi = n;
        } else {
            lo = n;
        }
        let d = sigma_prime_unchecked(n, params);
        let mut next = if d > 0.0 { n - f / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - n).abs() <= 1e-13 * next.max(1e-300) || hi - lo <= 1e-13 * hi {
            return Ok(next);
        }
        n = next;
    }
    Ok(n)
}

/// Limit pressure `(Sigma - nu)_+`, defined for `nu > 0` only.
pub fn limit_pressure_from_sigma(sigma_value: f64, nu: f64) -> Result<f64, ConstitutiveError> {
    if nu <= 0.0 {
        return Err(ConstitutiveError::UnsupportedNu);
    }
    Ok((sigma_value - nu).max(0.0))
}

pub fn pressure_field(n: &ScalarField, params: &MediumParams) -> Result<ScalarField, ConstitutiveError> {
    map_density(n, |v| power(v, params.gamma))
}

pub fn sigma_field(n: &ScalarField, params: &MediumParams) -> Result<ScalarField, ConstitutiveError> {
    map_density(n, |v| sigma_unchecked(v, params))
}

fn map_density(n: &ScalarField, f: impl Fn(f64) -> f64) -> Result<ScalarField, ConstitutiveError> {
    if let Some(&bad) = n.values().iter().find(|&&v| v.is_nan() || v < NEGATIVE_TOLERANCE) {
        return Err(ConstitutiveError::NegativeDensity(bad));
    }
    Ok(n.map(|v| f(v.max(0.0))))
}

/// Value of the hard-congestion energy, which is `+inf` off the constraint set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum LimitEnergy {
    Finite(f64),
    Infinite,
}

impl LimitEnergy {
    pub fn is_finite(&self) -> bool {
        matches!(self, LimitEnergy::Finite(_))
    }

    /// Finite value or `f64::INFINITY`.
    pub fn as_f64(&self) -> f64 {
        match *self {
            LimitEnergy::Finite(v) => v,
            LimitEnergy::Infinite => f64::INFINITY,
        }
    }
}

/// `int n V + 1/(gamma+1) int n^(gamma+1)`.
pub fn energy_gamma(n: &ScalarField, potential: &ScalarField, params: &MediumParams) -> Result<f64, ConstitutiveError> {
    let g = params.gamma;
    let interaction = n.zip_map(potential, |a, v| a * v)?;
    let internal = map_density(n, |v| power(v, g + 1.0) / (g + 1.0))?;
    Ok(integrate(&interaction) + integrate(&internal))
}

/// `int n V` when `max n <= 1` (up to [`CONGESTION_TOLERANCE`]), otherwise infinite.
pub fn energy_infinity(n: &ScalarField, potential: &ScalarField) -> Result<LimitEnergy, ConstitutiveError> {
    let interaction = n.zip_map(potential, |a, v| a * v)?;
    if n.max() > 1.0 + CONGESTION_TOLERANCE {
        return Ok(LimitEnergy::Infinite);
    }
    Ok(LimitEnergy::Finite(integrate(&interaction)))
}
