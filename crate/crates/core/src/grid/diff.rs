use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Grid, GridError, ScalarField, TensorField, VectorField};

/// Differentiation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Second-order centred differences: `(f[i+1] - f[i-1]) / 2h` for first
    /// derivatives, the compact 3-point stencil for pure second derivatives.
    Centered2,
    /// Fourier pseudo-spectral differentiation.
    Spectral,
}

pub fn gradient(f: &ScalarField, scheme: Scheme) -> Result<VectorField, GridError> {
    let grid = *f.grid();
    let components = match scheme {
        Scheme::Centered2 => (0..grid.dim()).map(|a| centered_first(f, a)).collect(),
        Scheme::Spectral => {
            let spec = Spectrum::forward(f)?;
            (0..grid.dim())
                .map(|a| spec.apply(|k| Complex64::new(0.0, k.first[a])))
                .collect()
        }
    };
    VectorField::new(grid, components)
}

pub fn divergence(field: &VectorField, scheme: Scheme) -> Result<ScalarField, GridError> {
    let grid = *field.grid();
    let mut out = vec![0.0; grid.len()];
    for axis in 0..grid.dim() {
        let comp = ScalarField::new(grid, field.component(axis).to_vec())?;
        let d = match scheme {
            Scheme::Centered2 => centered_first(&comp, axis),
            Scheme::Spectral => {
                Spectrum::forward(&comp)?.apply(|k| Complex64::new(0.0, k.first[axis]))
            }
        };
        out.iter_mut().zip(d).for_each(|(o, v)| *o += v);
    }
    ScalarField::new(grid, out)
}

pub fn laplacian(f: &ScalarField, scheme: Scheme) -> Result<ScalarField, GridError> {
    let grid = *f.grid();
    let values = match scheme {
        Scheme::Centered2 => {
            let mut out = vec![0.0; grid.len()];
            for axis in 0..grid.dim() {
                let d = centered_second(f, axis);
                out.iter_mut().zip(d).for_each(|(o, v)| *o += v);
            }
            out
        }
        Scheme::Spectral => {
            let spec = Spectrum::forward(f)?;
            spec.apply(|k| Complex64::new(-(0..grid.dim()).map(|a| k.second[a]).sum::<f64>(), 0.0))
        }
    };
    ScalarField::new(grid, values)
}

pub fn hessian(f: &ScalarField, scheme: Scheme) -> Result<TensorField, GridError> {
    let grid = *f.grid();
    let d = grid.dim();
    let mut entries = vec![Vec::new(); d * d];
    match scheme {
        Scheme::Centered2 => {
            for a in 0..d {
                entries[a * d + a] = centered_second(f, a);
            }
            if d == 2 {
                let mixed = centered_mixed(f);
                entries[1] = mixed.clone();
                entries[2] = mixed;
            }
        }
        Scheme::Spectral => {
            let spec = Spectrum::forward(f)?;
            for a in 0..d {
                entries[a * d + a] = spec.apply(|k| Complex64::new(-k.second[a], 0.0));
            }
            if d == 2 {
                let mixed = spec.apply(|k| Complex64::new(-k.first[0] * k.first[1], 0.0));
                entries[1] = mixed.clone();
                entries[2] = mixed;
            }
        }
    }
    TensorField::new(grid, entries)
}

/// Largest integer wavenumber (over axes) whose Fourier coefficient exceeds
/// `rel_tol` times the largest coefficient; 0 for constant fields.
pub fn max_wavenumber(f: &ScalarField, rel_tol: f64) -> Result<usize, GridError> {
    let spec = Spectrum::forward(f)?;
    let g = spec.grid;
    let peak = spec.coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut kmax = 0;
    if peak == 0.0 {
        return Ok(0);
    }
    for (idx, c) in spec.coeffs.iter().enumerate() {
        if c.norm() <= rel_tol * peak {
            continue;
        }
        let (i0, i1) = g.multi_index(idx);
        for (a, j) in [i0, i1].into_iter().enumerate().take(g.dim()) {
            let n = g.cells(a);
            kmax = kmax.max(j.min(n - j));
        }
    }
    Ok(kmax)
}

/// Midpoint quadrature `sum(values) * cell volume` with compensated summation.
pub fn integrate(f: &ScalarField) -> f64 {
    neumaier_sum(f.values()) * f.grid().cell_volume()
}

/// `(int |f|^p)^(1/p)`; `p = inf` gives the max norm.
pub fn lp_norm(f: &ScalarField, p: f64) -> Result<f64, GridError> {
    if p.is_nan() || p < 1.0 {
        return Err(GridError::InvalidExponent(p));
    }
    if p.is_infinite() {
        return Ok(max_abs(f));
    }
    let powered: Vec<f64> = f.values().iter().map(|v| v.abs().powf(p)).collect();
    Ok((neumaier_sum(&powered) * f.grid().cell_volume()).powf(1.0 / p))
}

pub fn max_abs(f: &ScalarField) -> f64 {
    f.values().iter().fold(0.0, |m, v| m.max(v.abs()))
}

pub(crate) fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn centered_first(f: &ScalarField, axis: usize) -> Vec<f64> {
    let g = f.grid();
    let inv = 1.0 / (2.0 * g.spacing(axis));
    let v = f.values();
    (0..g.len()).map(|i| (v[g.shift(i, axis, 1)] - v[g.shift(i, axis, -1)]) * inv).collect()
}

fn centered_second(f: &ScalarField, axis: usize) -> Vec<f64> {
    let g = f.grid();
    let h = g.spacing(axis);
    let inv = 1.0 / (h * h);
    let v = f.values();
    (0..g.len())
        .map(|i| (v[g.shift(i, axis, 1)] - 2.0 * v[i] + v[g.shift(i, axis, -1)]) * inv)
        .collect()
}

fn centered_mixed(f: &ScalarField) -> Vec<f64> {
    let g = f.grid();
    let inv = 1.0 / (4.0 * g.spacing(0) * g.spacing(1));
    let v = f.values();
    (0..g.len())
        .map(|i| {
            let p = g.shift(i, 0, 1);
            let m = g.shift(i, 0, -1);
            (v[g.shift(p, 1, 1)] - v[g.shift(p, 1, -1)] - v[g.shift(m, 1, 1)] + v[g.shift(m, 1, -1)]) * inv
        })
        .collect()
}

/// Angular wavenumbers of one Fourier mode.
struct Wavenumber {
    /// Used for odd derivatives; the Nyquist mode is zeroed.
    first: [f64; 2],
    /// `k^2` including the Nyquist mode.
    second: [f64; 2],
}

struct Spectrum {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl Spectrum {
    fn forward(f: &ScalarField) -> Result<Self, GridError> {
        let grid = *f.grid();
        for a in 0..grid.dim() {
            if !grid.cells(a).is_power_of_two() {
                return Err(GridError::NotPowerOfTwo(grid.cells(a)));
            }
        }
        let mut coeffs: Vec<Complex64> = f.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft2(&grid, &mut coeffs, false);
        Ok(Self { grid, coeffs })
    }

    /// Multiplies each coefficient by `symbol(k)` and transforms back.
    fn apply(&self, symbol: impl Fn(&Wavenumber) -> Complex64) -> Vec<f64> {
        let g = &self.grid;
        let mut buf = self.coeffs.clone();
        for (idx, c) in buf.iter_mut().enumerate() {
            let (i0, i1) = g.multi_index(idx);
            let k = wavenumber(g, [i0, i1]);
            *c *= symbol(&k);
        }
        fft2(g, &mut buf, true);
        let scale = 1.0 / g.len() as f64;
        buf.iter().map(|c| c.re * scale).collect()
    }
}

fn wavenumber(g: &Grid, idx: [usize; 2]) -> Wavenumber {
    let mut first = [0.0; 2];
    let mut second = [0.0; 2];
    for a in 0..g.dim() {
        let n = g.cells(a);
        let j = idx[a];
        let signed = if j <= n / 2 { j as f64 } else { j as f64 - n as f64 };
        let k = 2.0 * std::f64::consts::PI * signed / g.side(a);
        second[a] = k * k;
        first[a] = if 2 * j == n { 0.0 } else { k };
    }
    Wavenumber { first, second }
}

fn fft2(g: &Grid, data: &mut [Complex64], inverse: bool) {
    let mut planner = FftPlanner::new();
    let n0 = g.cells(0);
    let n1 = g.cells(1);
    if g.dim() == 2 {
        let fft = if inverse { planner.plan_fft_inverse(n1) } else { planner.plan_fft_forward(n1) };
        fft.process(data);
    }
    let fft = if inverse { planner.plan_fft_inverse(n0) } else { planner.plan_fft_forward(n0) };
    let mut column = vec![Complex64::new(0.0, 0.0); n0];
    for i1 in 0..n1 {
        for i0 in 0..n0 {
            column[i0] = data[i0 * n1 + i1];
        }
        fft.process(&mut column);
        for i0 in 0..n0 {
            data[i0 * n1 + i1] = column[i0];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn sine_1d(n: usize, side: f64) -> ScalarField {
        let g = Grid::new_1d(n, side).unwrap();
        ScalarField::from_fn(g, |x| (2.0 * PI * x[0] / side).sin())
    }

    #[test]
    fn constant_field_has_zero_derivatives() {
        let g = Grid::new_2d(16, 2.0).unwrap();
        let f = ScalarField::constant(g, 3.7);
        for scheme in [Scheme::Centered2, Scheme::Spectral] {
            let grad = gradient(&f, scheme).unwrap();
            assert!(grad.components().iter().flatten().all(|v| v.abs() < 1e-12));
            assert!(max_abs(&laplacian(&f, scheme).unwrap()) < 1e-12);
            let hess = hessian(&f, scheme).unwrap();
            assert!(max_abs(&hess.frobenius_squared()) < 1e-20);
        }
    }

    #[test]
    fn spectral_gradient_of_sine_is_exact() {
        let side = 3.0;
        let f = sine_1d(32, side);
        let grad = gradient(&f, Scheme::Spectral).unwrap();
        let k = 2.0 * PI / side;
        let err = (0..32)
            .map(|i| (grad.component(0)[i] - k * (k * f.grid().coords(i)[0]).cos()).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-12, "err = {err}");
    }

    #[test]
    fn centered_gradient_is_second_order() {
        let errs: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|&n| {
                let f = sine_1d(n, 1.0);
                let grad = gradient(&f, Scheme::Centered2).unwrap();
                (0..n)
                    .map(|i| (grad.component(0)[i] - 2.0 * PI * (2.0 * PI * f.grid().coords(i)[0]).cos()).abs())
                    .fold(0.0, f64::max)
            })
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((1.9..=2.1).contains(&order), "order {order}");
        }
    }

    #[test]
    fn spectral_laplacian_of_product_mode() {
        let side = 1.5;
        let g = Grid::new_2d(64, side).unwrap();
        let k = 2.0 * PI / side;
        let f = ScalarField::from_fn(g, |x| (k * x[0]).sin() * (k * x[1]).sin());
        let lap = laplacian(&f, Scheme::Spectral).unwrap();
        let err = lap
            .values()
            .iter()
            .zip(f.values())
            .map(|(l, v)| (l + 2.0 * k * k * v).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-10, "err = {err}");
    }

    #[test]
    fn spectral_rejects_non_power_of_two() {
        let g = Grid::new_1d(24, 1.0).unwrap();
        let f = ScalarField::zeros(g);
        assert!(matches!(gradient(&f, Scheme::Spectral), Err(GridError::NotPowerOfTwo(24))));
        assert!(gradient(&f, Scheme::Centered2).is_ok());
    }

    #[test]
    fn one_dimensional_hessian_is_second_derivative() {
        let f = sine_1d(64, 1.0);
        for scheme in [Scheme::Centered2, Scheme::Spectral] {
            let h = hessian(&f, scheme).unwrap();
            let lap = laplacian(&f, scheme).unwrap();
            assert_eq!(h.entry(0, 0), lap.values());
        }
    }

    #[test]
    fn quadrature_basics() {
        let g = Grid::new_2d(8, 1.0).unwrap();
        assert!((integrate(&ScalarField::constant(g, 1.0)) - 1.0).abs() < 1e-15);
        assert!((lp_norm(&ScalarField::constant(g, 2.0), 4.0).unwrap() - 2.0).abs() < 1e-14);
        assert!(integrate(&sine_1d(64, 1.0)).abs() < 1e-14);
        assert!(lp_norm(&ScalarField::constant(g, 2.0), 0.5).is_err());
        let f = sine_1d(64, 1.0).map(|v| -3.0 * v);
        assert_eq!(lp_norm(&f, f64::INFINITY).unwrap(), max_abs(&f));
    }
}
