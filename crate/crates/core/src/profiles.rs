//! Named initial densities and the Barenblatt self-similar solution.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::MediumParams;
use crate::grid::{Grid, ScalarField};

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("{0}")]
    Invalid(String),
}

/// Initial density profiles. Centres are given in physical coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialData {
    Constant {
        value: f64,
    },
    /// `background + amplitude * exp(-d^2 / 2 width^2)`, `d` the periodic distance.
    GaussianBump {
        center: Vec<f64>,
        width: f64,
        amplitude: f64,
        #[serde(default)]
        background: f64,
    },
    /// `amplitude * exp(1 - 1 / (1 - (d/radius)^2))` inside the ball, 0 outside.
    CompactBump {
        center: Vec<f64>,
        radius: f64,
        amplitude: f64,
    },
    /// Ring defined through its pressure, `p0 = peak_pressure * (1 - s^2)_+^2`
    /// with `s = (d - radius) / half_width`, and `n0 = p0^(1/gamma)`.
    Annulus {
        center: Vec<f64>,
        radius: f64,
        half_width: f64,
        peak_pressure: f64,
    },
    /// Barenblatt solution of the `nu = 0`, `V = 0` problem at time `t0`.
    Barenblatt {
        t0: f64,
        #[serde(default = "unit")]
        scale: f64,
        center: Vec<f64>,
    },
    /// `mean + amplitude * f / max|f|` for a random trigonometric polynomial `f`.
    RandomSmooth {
        seed: u64,
        mean: f64,
        amplitude: f64,
        #[serde(default = "default_wavenumber")]
        max_wavenumber: u32,
    },
}

fn unit() -> f64 {
    1.0
}

fn default_wavenumber() -> u32 {
    3
}

/// Periodic (minimum image) distance from `x` to `center`.
pub fn periodic_distance(grid: &Grid, x: [f64; 2], center: &[f64]) -> f64 {
    let mut d2 = 0.0;
    for a in 0..grid.dim() {
        let side = grid.side(a);
        let mut dx = (x[a] - center[a]).rem_euclid(side);
        if dx > 0.5 * side {
            dx -= side;
        }
        d2 += dx * dx;
    }
    d2.sqrt()
}

impl InitialData {
    pub fn validate(&self, grid: &Grid) -> Result<(), ProfileError> {
        let dim = grid.dim();
        let check_center = |c: &[f64]| {
            if c.len() != dim {
                Err(ProfileError::Invalid(format!("centre needs {dim} coordinates, got {}", c.len())))
            } else {
                Ok(())
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(ProfileError::Invalid(format!("{name} must be positive, got {v}")))
            }
        };
        match self {
            InitialData::Constant { value } => {
                if !(value.is_finite() && *value >= 0.0) {
                    return Err(ProfileError::Invalid(format!("constant density must be >= 0, got {value}")));
                }
            }
            InitialData::GaussianBump { center, width, amplitude, background } => {
                check_center(center)?;
                positive("width", *width)?;
                if !(*amplitude >= 0.0 && *background >= 0.0) {
                    return Err(ProfileError::Invalid("amplitude and background must be >= 0".into()));
                }
            }
            InitialData::CompactBump { center, radius, amplitude } => {
                check_center(center)?;
                positive("radius", *radius)?;
                positive("amplitude", *amplitude)?;
            }
            InitialData::Annulus { center, radius, half_width, peak_pressure } => {
                check_center(center)?;
                positive("radius", *radius)?;
                positive("half_width", *half_width)?;
                positive("peak_pressure", *peak_pressure)?;
                if half_width >= radius {
                    return Err(ProfileError::Invalid("annulus half_width must be below its radius".into()));
                }
            }
            InitialData::Barenblatt { t0, scale, center } => {
                check_center(center)?;
                positive("t0", *t0)?;
                positive("scale", *scale)?;
            }
            InitialData::RandomSmooth { mean, amplitude, max_wavenumber, .. } => {
                if !(*amplitude >= 0.0 && *mean >= *amplitude) {
                    return Err(ProfileError::Invalid("random_smooth needs mean >= amplitude >= 0".into()));
                }
                if *max_wavenumber == 0 {
                    return Err(ProfileError::Invalid("max_wavenumber must be >= 1".into()));
                }
            }
        }
        Ok(())
    }

    /// Samples the profile; `params` matters for the pressure-defined and
    /// self-similar profiles.
    pub fn sample(&self, grid: &Grid, params: &MediumParams) -> Result<ScalarField, ProfileError> {
        self.validate(grid)?;
        let field = match self {
            InitialData::Constant { value } => ScalarField::constant(*grid, *value),
            InitialData::GaussianBump { center, width, amplitude, background } => ScalarField::from_fn(*grid, |x| {
                let d = periodic_distance(grid, x, center);
                background + amplitude * (-d * d / (2.0 * width * width)).exp()
            }),
            InitialData::CompactBump { center, radius, amplitude } => ScalarField::from_fn(*grid, |x| {
                let s = periodic_distance(grid, x, center) / radius;
                if s < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - s * s)).exp()
                } else {
                    0.0
                }
            }),
            InitialData::Annulus { center, radius, half_width, peak_pressure } => {
                let inv_gamma = 1.0 / params.gamma();
                ScalarField::from_fn(*grid, |x| {
                    let s = (periodic_distance(grid, x, center) - radius) / half_width;
                    let q = (1.0 - s * s).max(0.0);
                    let p = peak_pressure * q * q;
                    if p > 0.0 {
                        (inv_gamma * p.ln()).exp()
                    } else {
                        0.0
                    }
                })
            }
            InitialData::Barenblatt { t0, scale, center } => {
                let b = Barenblatt::new(grid.dim(), params.gamma(), *scale)?;
                ScalarField::from_fn(*grid, |x| b.density(periodic_distance(grid, x, center), *t0))
            }
            InitialData::RandomSmooth { seed, mean, amplitude, max_wavenumber } => {
                let f = random_trig_polynomial(grid, *seed, *max_wavenumber);
                let peak = f.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let scale = if peak > 0.0 { amplitude / peak } else { 0.0 };
                f.map(|v| mean + scale * v)
            }
        };
        Ok(field)
    }

    /// Whether the profile is meant to have compact support.
    pub fn is_compactly_supported(&self) -> bool {
        matches!(
            self,
            InitialData::CompactBump { .. } | InitialData::Annulus { .. } | InitialData::Barenblatt { .. }
        )
    }
}

/// Sum of Fourier modes with wavenumbers up to `kmax` per axis and
/// coefficients uniform in `[-1, 1]`, decaying like `1/(1 + |k|^2)`.
pub fn random_trig_polynomial(grid: &Grid, seed: u64, kmax: u32) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = kmax as i32;
    let mut modes = Vec::new();
    let ky_range = if grid.dim() == 2 { -k..=k } else { 0..=0 };
    for kx in 0..=k {
        for ky in ky_range.clone() {
            if kx == 0 && ky <= 0 {
                continue;
            }
            let decay = 1.0 / (1.0 + (kx * kx + ky * ky) as f64);
            let a: f64 = rng.gen_range(-1.0..1.0) * decay;
            let b: f64 = rng.gen_range(-1.0..1.0) * decay;
            modes.push((kx as f64, ky as f64, a, b));
        }
    }
    let (l0, l1) = (grid.side(0), grid.side(1));
    ScalarField::from_fn(*grid, |x| {
        modes
            .iter()
            .map(|&(kx, ky, a, b)| {
                let phase = 2.0 * PI * (kx * x[0] / l0 + ky * x[1] / l1);
                a * phase.cos() + b * phase.sin()
            })
            .sum()
    })
}

/// Barenblatt solution of `dn/dt = gamma/(gamma+1) Lap n^m`, `m = gamma + 1`.
///
/// With `tau = (m - 1)/m * t` the density is the classical profile of
/// `du/dtau = Lap u^m`:
/// `u = tau^(-alpha) (C - k |x|^2 tau^(-2 beta))_+^(1/(m-1))`,
/// `alpha = d / (d(m-1) + 2)`, `beta = alpha / d`, `k = alpha (m-1) / (2 m d)`.
#[derive(Clone, Copy, Debug)]
pub struct Barenblatt {
    dim: usize,
    m: f64,
    scale: f64,
}

impl Barenblatt {
    pub fn new(dim: usize, gamma: f64, scale: f64) -> Result<Self, ProfileError> {
        if !(gamma > 0.0 && scale > 0.0) || !(dim == 1 || dim == 2) {
            return Err(ProfileError::Invalid("barenblatt needs gamma > 0, scale > 0, dim 1 or 2".into()));
        }
        Ok(Self { dim, m: gamma + 1.0, scale })
    }

    pub fn alpha(&self) -> f64 {
        let d = self.dim as f64;
        d / (d * (self.m - 1.0) + 2.0)
    }

    pub fn beta(&self) -> f64 {
        self.alpha() / self.dim as f64
    }

    fn k(&self) -> f64 {
        self.alpha() * (self.m - 1.0) / (2.0 * self.m * self.dim as f64)
    }

    /// Rescaled time of the standard porous medium equation.
    pub fn tau(&self, t: f64) -> f64 {
        (self.m - 1.0) / self.m * t
    }

    pub fn density(&self, r: f64, t: f64) -> f64 {
        let tau = self.tau(t);
        let inner = self.scale - self.k() * r * r * tau.powf(-2.0 * self.beta());
        if inner <= 0.0 {
            0.0
        } else {
            tau.powf(-self.alpha()) * inner.powf(1.0 / (self.m - 1.0))
        }
    }

    /// Pressure `n^gamma`, a truncated paraboloid.
    pub fn pressure(&self, r: f64, t: f64) -> f64 {
        let tau = self.tau(t);
        let inner = self.scale - self.k() * r * r * tau.powf(-2.0 * self.beta());
        tau.powf(-self.alpha() * (self.m - 1.0)) * inner.max(0.0)
    }

    pub fn support_radius(&self, t: f64) -> f64 {
        (self.scale / self.k()).sqrt() * self.tau(t).powf(self.beta())
    }

    /// `int |grad p|^2 dx` over the support.
    pub fn grad_pressure_l2_squared(&self, t: f64) -> f64 {
        let tau = self.tau(t);
        let slope = 2.0 * self.k() * tau.powf(-self.alpha() * (self.m - 1.0) - 2.0 * self.beta());
        let r = self.support_radius(t);
        // int |x|^2 over the ball of radius r
        let second_moment = if self.dim == 1 { 2.0 * r.powi(3) / 3.0 } else { PI * r.powi(4) / 2.0 };
        slope * slope * second_moment
    }

    /// Total mass, computed by radial quadrature of the closed form.
    pub fn mass(&self, t: f64) -> f64 {
        let r = self.support_radius(t);
        let steps = 20_000;
        let h = r / steps as f64;
        (0..steps)
            .map(|i| {
                let s = (i as f64 + 0.5) * h;
                let shell = if self.dim == 1 { 2.0 } else { 2.0 * PI * s };
                shell * self.density(s, t) * h
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn medium(gamma: f64) -> MediumParams {
        MediumParams::new(gamma, 0.0).unwrap()
    }

    #[test]
    fn barenblatt_pressure_is_density_power() {
        let b = Barenblatt::new(2, 2.0, 0.7).unwrap();
        for &r in &[0.0, 0.1, 0.2, 0.3] {
            let n = b.density(r, 0.5);
            assert!((n.powf(2.0) - b.pressure(r, 0.5)).abs() < 1e-12);
        }
        assert_eq!(b.density(b.support_radius(0.5) * 1.001, 0.5), 0.0);
    }

    #[test]
    fn barenblatt_mass_is_conserved_in_time() {
        for dim in [1, 2] {
            let b = Barenblatt::new(dim, 3.0, 1.0).unwrap();
            let m0 = b.mass(0.1);
            let m1 = b.mass(1.7);
            assert!((m0 - m1).abs() < 1e-6 * m0, "dim {dim}: {m0} vs {m1}");
        }
    }

    #[test]
    fn barenblatt_satisfies_the_pde_pointwise() {
        // finite differences in (r, t) of the closed form inside the support
        let gamma = 2.0;
        let b = Barenblatt::new(1, gamma, 1.0).unwrap();
        let (r, t, e) = (0.2, 0.8, 1e-4);
        let dt = (b.density(r, t + e) - b.density(r, t - e)) / (2.0 * e);
        let s = |r: f64| gamma / (gamma + 1.0) * b.density(r, t).powf(gamma + 1.0);
        let lap = (s(r + e) - 2.0 * s(r) + s(r - e)) / (e * e);
        assert!((dt - lap).abs() < 1e-5 * dt.abs().max(1.0), "{dt} vs {lap}");
    }

    #[test]
    fn annulus_density_is_indicator_like() {
        let g = Grid::new_2d(64, 1.0).unwrap();
        let data = InitialData::Annulus { center: vec![0.5, 0.5], radius: 0.25, half_width: 0.1, peak_pressure: 1.0 };
        let n = data.sample(&g, &medium(80.0)).unwrap();
        assert!(n.max() <= 1.0);
        let centre = n.values()[g.index(32, 32)];
        assert_eq!(centre, 0.0);
        let ring = n.values()[g.index(32, 48)];
        assert!(ring > 0.95);
    }

    #[test]
    fn random_smooth_is_deterministic_and_bounded() {
        let g = Grid::new_2d(32, 1.0).unwrap();
        let data = InitialData::RandomSmooth { seed: 7, mean: 0.5, amplitude: 0.3, max_wavenumber: 3 };
        let a = data.sample(&g, &medium(2.0)).unwrap();
        let b = data.sample(&g, &medium(2.0)).unwrap();
        assert_eq!(a, b);
        assert!(a.max() <= 0.8 + 1e-12 && a.min() >= 0.2 - 1e-12);
        assert!((a.max() - 0.8).abs() < 1e-12 || (a.min() - 0.2).abs() < 1e-12);
    }

    #[test]
    fn invalid_profiles_are_rejected() {
        let g = Grid::new_2d(16, 1.0).unwrap();
        let bad = InitialData::CompactBump { center: vec![0.5], radius: 0.2, amplitude: 1.0 };
        assert!(bad.sample(&g, &medium(2.0)).is_err());
        let bad = InitialData::Constant { value: -1.0 };
        assert!(bad.sample(&g, &medium(2.0)).is_err());
    }
}
