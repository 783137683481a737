//! Periodic structured grids in one and two dimensions.
//!
//! Cells are indexed row-major with axis 0 outermost, so in 2D the value at
//! `(i0, i1)` lives at `i0 * n1 + i1`. Samples sit at cell centres
//! `x = (i + 1/2) h` and every axis wraps around.

mod diff;
mod io;

pub(crate) use diff::neumaier_sum;
pub use diff::{divergence, gradient, hessian, integrate, laplacian, lp_norm, max_abs, max_wavenumber, Scheme};
pub use io::{read_field_binary, write_field_binary, write_field_csv, CSV_MAX_CELLS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest admissible number of cells per axis.
pub const MIN_CELLS: usize = 8;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("field length {got} does not match grid size {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value at cell {0}")]
    NonFinite(usize),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("spectral scheme needs a power-of-two cell count, got {0}")]
    NotPowerOfTwo(usize),
    #[error("norm exponent must be >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("malformed field file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Uniform periodic grid on a box `[0, L0) x [0, L1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    dim: usize,
    cells: [usize; 2],
    side: [f64; 2],
}

impl Grid {
    pub fn new(dim: usize, cells: &[usize], side: &[f64]) -> Result<Self, GridError> {
        if dim != 1 && dim != 2 {
            return Err(GridError::InvalidGrid(format!("dimension must be 1 or 2, got {dim}")));
        }
        if cells.len() != dim || side.len() != dim {
            return Err(GridError::InvalidGrid(format!(
                "expected {dim} axis entries, got {} cell counts and {} side lengths",
                cells.len(),
                side.len()
            )));
        }
        let mut c = [1usize; 2];
        let mut s = [1.0f64; 2];
        for axis in 0..dim {
            if cells[axis] < MIN_CELLS {
                return Err(GridError::InvalidGrid(format!(
                    "axis {axis}: need at least {MIN_CELLS} cells, got {}",
                    cells[axis]
                )));
            }
            if !(side[axis].is_finite() && side[axis] > 0.0) {
                return Err(GridError::InvalidGrid(format!(
                    "axis {axis}: side length must be positive and finite, got {}",
                    side[axis]
                )));
            }
            c[axis] = cells[axis];
            s[axis] = side[axis];
        }
        Ok(Self { dim, cells: c, side: s })
    }

    pub fn new_1d(cells: usize, side: f64) -> Result<Self, GridError> {
        Self::new(1, &[cells], &[side])
    }

    /// Square 2D grid with the same resolution and side on both axes.
    pub fn new_2d(cells: usize, side: f64) -> Result<Self, GridError> {
        Self::new(2, &[cells, cells], &[side, side])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn side(&self, axis: usize) -> f64 {
        self.side[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.side[axis] / self.cells[axis] as f64
    }

    /// Smallest spacing over the active axes.
    pub fn min_spacing(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cell_volume(&self) -> f64 {
        (0..self.dim).map(|a| self.spacing(a)).product()
    }

    pub fn volume(&self) -> f64 {
        (0..self.dim).map(|a| self.side[a]).product()
    }

    pub fn is_power_of_two(&self) -> bool {
        (0..self.dim).all(|a| self.cells[a].is_power_of_two())
    }

    /// Flat index of the multi-index `(i0, i1)`; `i1` is ignored in 1D.
    #[inline]
    pub fn index(&self, i0: usize, i1: usize) -> usize {
        i0 * self.cells[1] + i1
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> (usize, usize) {
        (idx / self.cells[1], idx % self.cells[1])
    }

    /// Flat index of the neighbour `offset` cells away along `axis`, wrapping.
    #[inline]
    pub fn shift(&self, idx: usize, axis: usize, offset: isize) -> usize {
        let (i0, i1) = self.multi_index(idx);
        let wrap = |i: usize, n: usize| ((i as isize + offset).rem_euclid(n as isize)) as usize;
        if axis == 0 {
            self.index(wrap(i0, self.cells[0]), i1)
        } else {
            self.index(i0, wrap(i1, self.cells[1]))
        }
    }

    /// Cell-centre coordinates of flat index `idx` (second entry is 0 in 1D).
    pub fn coords(&self, idx: usize) -> [f64; 2] {
        let (i0, i1) = self.multi_index(idx);
        let mut x = [(i0 as f64 + 0.5) * self.spacing(0), 0.0];
        if self.dim == 2 {
            x[1] = (i1 as f64 + 0.5) * self.spacing(1);
        }
        x
    }

    /// Whether `idx` is in the outermost layer of cells on some axis.
    pub fn on_seam(&self, idx: usize) -> bool {
        let (i0, i1) = self.multi_index(idx);
        let edge = |i: usize, n: usize| i == 0 || i + 1 == n;
        edge(i0, self.cells[0]) || (self.dim == 2 && edge(i1, self.cells[1]))
    }
}

/// Grid-sampled real function.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::LengthMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(GridError::NonFinite(i));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: Grid, value: f64) -> Self {
        Self { grid, values: vec![value; grid.len()] }
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: Grid, f: impl Fn([f64; 2]) -> f64) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.coords(i))).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { grid: self.grid, values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Result<Self, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self { grid: self.grid, values })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// One component per axis per cell.
#[derive(Clone, Debug, PartialEq)]
pub struct VectorField {
    grid: Grid,
    components: Vec<Vec<f64>>,
}

impl VectorField {
    pub fn new(grid: Grid, components: Vec<Vec<f64>>) -> Result<Self, GridError> {
        if components.len() != grid.dim() {
            return Err(GridError::InvalidGrid(format!(
                "vector field needs {} components, got {}",
                grid.dim(),
                components.len()
            )));
        }
        for c in &components {
            if c.len() != grid.len() {
                return Err(GridError::LengthMismatch { expected: grid.len(), got: c.len() });
            }
            if let Some(i) = c.iter().position(|v| !v.is_finite()) {
                return Err(GridError::NonFinite(i));
            }
        }
        Ok(Self { grid, components })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self { grid, components: vec![vec![0.0; grid.len()]; grid.dim()] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn component(&self, axis: usize) -> &[f64] {
        &self.components[axis]
    }

    pub fn components(&self) -> &[Vec<f64>] {
        &self.components
    }

    /// Pointwise squared Euclidean norm.
    pub fn norm_squared(&self) -> ScalarField {
        let values = (0..self.grid.len())
            .map(|i| self.components.iter().map(|c| c[i] * c[i]).sum())
            .collect();
        ScalarField { grid: self.grid, values }
    }

    /// Euclidean L2 inner product of two vector fields.
    pub fn dot(&self, other: &Self) -> Result<f64, GridError> {
        if self.grid != other.grid {
            return Err(GridError::GridMismatch);
        }
        let pointwise = (0..self.grid.len())
            .map(|i| self.components.iter().zip(&other.components).map(|(a, b)| a[i] * b[i]).sum())
            .collect();
        Ok(integrate(&ScalarField { grid: self.grid, values: pointwise }))
    }
}

/// Full `dim x dim` matrix per cell, row-major over the matrix index.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: Grid,
    entries: Vec<Vec<f64>>,
}

impl TensorField {
    pub fn new(grid: Grid, entries: Vec<Vec<f64>>) -> Result<Self, GridError> {
        let d = grid.dim();
        if entries.len() != d * d {
            return Err(GridError::InvalidGrid(format!(
                "tensor field needs {} entries, got {}",
                d * d,
                entries.len()
            )));
        }
        for e in &entries {
            if e.len() != grid.len() {
                return Err(GridError::LengthMismatch { expected: grid.len(), got: e.len() });
            }
        }
        Ok(Self { grid, entries })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn entry(&self, i: usize, j: usize) -> &[f64] {
        &self.entries[i * self.grid.dim() + j]
    }

    pub fn trace(&self) -> ScalarField {
        let d = self.grid.dim();
        let values = (0..self.grid.len()).map(|c| (0..d).map(|a| self.entry(a, a)[c]).sum()).collect();
        ScalarField { grid: self.grid, values }
    }

    /// Pointwise squared Frobenius norm `sum_ij H_ij^2`.
    pub fn frobenius_squared(&self) -> ScalarField {
        let values = (0..self.grid.len()).map(|c| self.entries.iter().map(|e| e[c] * e[c]).sum()).collect();
        ScalarField { grid: self.grid, values }
    }

    /// Pointwise quadratic form `v^T H v`.
    pub fn quadratic_form(&self, v: &VectorField) -> Result<ScalarField, GridError> {
        if self.grid != *v.grid() {
            return Err(GridError::GridMismatch);
        }
        let d = self.grid.dim();
        let values = (0..self.grid.len())
            .map(|c| {
                let mut s = 0.0;
                for i in 0..d {
                    for j in 0..d {
                        s += v.component(i)[c] * self.entry(i, j)[c] * v.component(j)[c];
                    }
                }
                s
            })
            .collect();
        Ok(ScalarField { grid: self.grid, values })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_or_degenerate_grids() {
        assert!(Grid::new_1d(4, 1.0).is_err());
        assert!(Grid::new_1d(16, 0.0).is_err());
        assert!(Grid::new(3, &[8, 8, 8], &[1.0, 1.0, 1.0]).is_err());
        assert!(Grid::new(2, &[8], &[1.0]).is_err());
    }

    #[test]
    fn shift_wraps_on_every_axis() {
        let g = Grid::new(2, &[8, 16], &[1.0, 2.0]).unwrap();
        let idx = g.index(0, 15);
        assert_eq!(g.multi_index(g.shift(idx, 0, -1)), (7, 15));
        assert_eq!(g.multi_index(g.shift(idx, 1, 1)), (0, 0));
        assert!(g.on_seam(idx));
        assert!(!g.on_seam(g.index(3, 4)));
    }

    #[test]
    fn field_rejects_nan_and_wrong_length() {
        let g = Grid::new_1d(8, 1.0).unwrap();
        assert!(matches!(ScalarField::new(g, vec![0.0; 7]), Err(GridError::LengthMismatch { .. })));
        let mut v = vec![0.0; 8];
        v[3] = f64::NAN;
        assert!(matches!(ScalarField::new(g, v), Err(GridError::NonFinite(3))));
    }
}
