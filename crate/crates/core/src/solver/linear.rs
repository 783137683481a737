//! Linear algebra for the implicit diffusion solve.
//!
//! Systems have the form `(I - dt L D) x = r` with `L` the compact periodic
//! Laplacian and `D = diag(d)`, `d >= 0`. Writing `y = D x` on the cells
//! where `d > 0` gives the symmetric positive definite system
//! `(D^-1 - dt L) y = r` there; the remaining cells follow explicitly from
//! `x = r + dt L y`.

use crate::grid::Grid;

/// Coefficients at or below this are treated as exactly zero.
const ACTIVE_THRESHOLD: f64 = 1e-200;

/// Precomputed neighbour table of the compact Laplacian.
pub(crate) struct Stencil {
    dim: usize,
    neighbours: Vec<[usize; 4]>,
    inv_h2: [f64; 2],
}

impl Stencil {
    pub fn new(grid: &Grid) -> Self {
        let neighbours = (0..grid.len())
            .map(|i| {
                let mut nb = [i; 4];
                for a in 0..grid.dim() {
                    nb[2 * a] = grid.shift(i, a, -1);
                    nb[2 * a + 1] = grid.shift(i, a, 1);
                }
                nb
            })
            .collect();
        let mut inv_h2 = [0.0; 2];
        for (a, slot) in inv_h2.iter_mut().enumerate().take(grid.dim()) {
            let h = grid.spacing(a);
            *slot = 1.0 / (h * h);
        }
        Self { dim: grid.dim(), neighbours, inv_h2 }
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    /// Sum over axes of `2 / h^2`, the magnitude of the stencil's diagonal.
    pub fn diagonal(&self) -> f64 {
        2.0 * (self.inv_h2[0] + self.inv_h2[1])
    }

    #[inline]
    pub fn apply_at(&self, u: &[f64], i: usize) -> f64 {
        let nb = &self.neighbours[i];
        let mut s = (u[nb[0]] - 2.0 * u[i] + u[nb[1]]) * self.inv_h2[0];
        if self.dim == 2 {
            s += (u[nb[2]] - 2.0 * u[i] + u[nb[3]]) * self.inv_h2[1];
        }
        s
    }

    #[cfg(test)]
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.apply_at(u, i);
        }
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct LinearStats {
    pub iterations: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `(I - dt L diag(coef)) x = rhs`.
pub(crate) fn solve_shifted(
    stencil: &Stencil,
    coef: &[f64],
    dt: f64,
    rhs: &[f64],
    tol: f64,
    max_iter: usize,
) -> (Vec<f64>, LinearStats) {
    let n = stencil.len();
    let active: Vec<bool> = coef.iter().map(|&c| c > ACTIVE_THRESHOLD).collect();
    let inv_d: Vec<f64> = coef.iter().zip(&active).map(|(&c, &a)| if a { 1.0 / c } else { 0.0 }).collect();
    let diag_l = dt * stencil.diagonal();
    let precond: Vec<f64> =
        inv_d.iter().zip(&active).map(|(&id, &a)| if a { 1.0 / (id + diag_l) } else { 0.0 }).collect();

    let apply = |y: &[f64], out: &mut [f64]| {
        for i in 0..n {
            out[i] = if active[i] { inv_d[i] * y[i] - dt * stencil.apply_at(y, i) } else { 0.0 };
        }
    };

    // preconditioned conjugate gradients on the active cells, y = 0 elsewhere
    let mut y = vec![0.0; n];
    let mut r: Vec<f64> = rhs.iter().zip(&active).map(|(&v, &a)| if a { v } else { 0.0 }).collect();
    let r0 = dot(&r, &r).sqrt();
    let mut stats = LinearStats { iterations: 0, converged: true };
    if r0 > 0.0 {
        let mut z: Vec<f64> = r.iter().zip(&precond).map(|(a, b)| a * b).collect();
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        stats.converged = false;
        for it in 1..=max_iter {
            apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 {
                break;
            }
            let alpha = rz / pap;
            for i in 0..n {
                y[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            stats.iterations = it;
            if dot(&r, &r).sqrt() <= tol * r0 {
                stats.converged = true;
                break;
            }
            for i in 0..n {
                z[i] = r[i] * precond[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }

    let x = (0..n)
        .map(|i| if active[i] { y[i] * inv_d[i] } else { rhs[i] + dt * stencil.apply_at(&y, i) })
        .collect();
    (x, stats)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(stencil: &Stencil, coef: &[f64], dt: f64, x: &[f64], rhs: &[f64]) -> f64 {
        let dx: Vec<f64> = x.iter().zip(coef).map(|(a, b)| a * b).collect();
        let mut l = vec![0.0; x.len()];
        stencil.apply(&dx, &mut l);
        (0..x.len()).map(|i| (x[i] - dt * l[i] - rhs[i]).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn solves_with_degenerate_coefficients() {
        let g = Grid::new_2d(16, 1.0).unwrap();
        let st = Stencil::new(&g);
        // vacuum on half the box, stiff coefficients elsewhere
        let coef: Vec<f64> = (0..g.len()).map(|i| if g.coords(i)[0] < 0.5 { 0.0 } else { 1.0 + 100.0 * g.coords(i)[1] }).collect();
        let rhs: Vec<f64> = (0..g.len()).map(|i| (7.0 * g.coords(i)[0]).sin() + 0.3).collect();
        let (x, stats) = solve_shifted(&st, &coef, 1e-2, &rhs, 1e-12, 5000);
        assert!(stats.converged);
        assert!(residual(&st, &coef, 1e-2, &x, &rhs) < 1e-9);
        // column sums of L vanish, so the solve preserves the total
        let sx: f64 = x.iter().sum();
        let sr: f64 = rhs.iter().sum();
        assert!((sx - sr).abs() < 1e-9 * sr.abs().max(1.0));
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        let st = Stencil::new(&g);
        let (x, stats) = solve_shifted(&st, &[1.0; 8], 0.1, &[0.0; 8], 1e-12, 10);
        assert!(stats.converged);
        assert!(x.iter().all(|&v| v == 0.0));
    }
}
