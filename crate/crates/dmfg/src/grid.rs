//! Uniform grids on the flat torus `T^d = R^d / Z^d` for `d` in {1, 2},
//! and real-valued functions sampled on them.
//!
//! All coordinate arithmetic wraps modulo 1. Points are `{k/N : 0 <= k < N}`
//! per axis; differences of points are always reduced to the minimal-norm
//! lift with each component in `(-1/2, 1/2]`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Uniform discretization of the torus. Owns the spacing `h = 1/N` and the
/// wrap-around geometry; everything else indexes into it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TorusGrid {
    dim: usize,
    n_per_axis: usize,
}

impl TorusGrid {
    pub fn new(dim: usize, n_per_axis: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidSpec(format!(
                "grid dimension must be 1 or 2, got {dim}"
            )));
        }
        if n_per_axis < 2 {
            return Err(Error::InvalidSpec(format!(
                "grid needs at least 2 points per axis, got {n_per_axis}"
            )));
        }
        Ok(Self { dim, n_per_axis })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_per_axis(&self) -> usize {
        self.n_per_axis
    }

    /// Grid spacing `h = 1/N`.
    pub fn spacing(&self) -> f64 {
        1.0 / self.n_per_axis as f64
    }

    /// Total number of grid points `N^d`.
    pub fn len(&self) -> usize {
        self.n_per_axis.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Row-major index of per-axis coordinates.
    pub fn index_of(&self, axes: &[usize]) -> usize {
        debug_assert_eq!(axes.len(), self.dim);
        match self.dim {
            1 => axes[0] % self.n_per_axis,
            _ => (axes[0] % self.n_per_axis) * self.n_per_axis + axes[1] % self.n_per_axis,
        }
    }

    /// Per-axis coordinates of a row-major index.
    pub fn axes_of(&self, index: usize) -> Vec<usize> {
        debug_assert!(index < self.len());
        match self.dim {
            1 => vec![index],
            _ => vec![index / self.n_per_axis, index % self.n_per_axis],
        }
    }

    /// Coordinates of a grid point in `[0,1)^d`.
    pub fn point(&self, index: usize) -> Vec<f64> {
        self.axes_of(index)
            .into_iter()
            .map(|k| k as f64 * self.spacing())
            .collect()
    }

    /// Grid point reached from `index` by `steps[a]` lattice steps along
    /// each axis, wrapping modulo `N`.
    pub fn shift(&self, index: usize, steps: &[i64]) -> usize {
        debug_assert_eq!(steps.len(), self.dim);
        let n = self.n_per_axis as i64;
        let axes = self.axes_of(index);
        let shifted: Vec<usize> = axes
            .iter()
            .zip(steps)
            .map(|(&a, &s)| (a as i64 + s).rem_euclid(n) as usize)
            .collect();
        self.index_of(&shifted)
    }

    /// Per-axis step count of the minimal-norm lift of `to - from`; each
    /// entry lies in `(-N/2, N/2]`.
    pub fn lift_steps(&self, from: usize, to: usize) -> Vec<i64> {
        let n = self.n_per_axis as i64;
        let fa = self.axes_of(from);
        let ta = self.axes_of(to);
        fa.iter()
            .zip(&ta)
            .map(|(&f, &t)| {
                let mut d = (t as i64 - f as i64).rem_euclid(n);
                if 2 * d > n {
                    d -= n;
                }
                d
            })
            .collect()
    }

    /// Minimal-norm lift of the coordinate difference `to - from`, each
    /// component in `(-1/2, 1/2]`.
    pub fn lift(&self, from: &[f64], to: &[f64]) -> Vec<f64> {
        from.iter()
            .zip(to)
            .map(|(&f, &t)| {
                let mut d = (t - f).rem_euclid(1.0);
                if d > 0.5 {
                    d -= 1.0;
                }
                d
            })
            .collect()
    }

    /// Euclidean geodesic distance between two grid points.
    pub fn geodesic_distance(&self, a: usize, b: usize) -> f64 {
        let h = self.spacing();
        self.lift_steps(a, b)
            .iter()
            .map(|&s| (s as f64 * h).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// Index of the grid point nearest to an arbitrary point of the torus.
    pub fn nearest_index(&self, point: &[f64]) -> usize {
        debug_assert_eq!(point.len(), self.dim);
        let n = self.n_per_axis;
        let axes: Vec<usize> = point
            .iter()
            .map(|&c| (c.rem_euclid(1.0) * n as f64).round() as usize % n)
            .collect();
        self.index_of(&axes)
    }

    /// Step offsets per axis admissible for a window of radius `w`,
    /// restricted to minimal-norm lifts and sorted increasingly. A radius
    /// `w >= N/2` therefore enumerates every grid point exactly once.
    pub fn axis_offsets(&self, w: usize) -> Vec<i64> {
        let n = self.n_per_axis as i64;
        let lo = (-(n - 1) / 2).max(-(w as i64));
        let hi = (n / 2).min(w as i64);
        (lo..=hi).collect()
    }

    /// Whether a window of radius `w` already covers the whole grid.
    pub fn window_is_full(&self, w: usize) -> bool {
        self.axis_offsets(w).len() >= self.n_per_axis
    }
}

/// Real values attached to the points of a [`TorusGrid`], indexed row-major.
/// Represents value functions and sampled potentials alike.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: TorusGrid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: TorusGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} values, got {}",
                grid.len(),
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "grid function value at index {bad} is {}",
                values[bad]
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    /// Sample a function of the point coordinates onto the grid.
    pub fn sample<F: Fn(&[f64]) -> f64>(grid: TorusGrid, f: F) -> Result<Self> {
        let values: Vec<f64> = (0..grid.len()).map(|i| f(&grid.point(i))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values[index]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().fold(f64::INFINITY, |acc, &v| acc.min(v))
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &v| acc.max(v))
    }

    /// Discrete Lipschitz constant: largest difference across one grid edge
    /// divided by the spacing, over all axes with wrap-around.
    pub fn discrete_lipschitz(&self) -> f64 {
        let grid = self.grid;
        let h = grid.spacing();
        let mut worst = 0.0_f64;
        for i in 0..grid.len() {
            for axis in 0..grid.dim() {
                let mut steps = vec![0_i64; grid.dim()];
                steps[axis] = 1;
                let j = grid.shift(i, &steps);
                worst = worst.max((self.values[j] - self.values[i]).abs() / h);
            }
        }
        worst
    }

    /// Largest absolute difference against another function on the same grid.
    pub fn sup_distance(&self, other: &GridFunction) -> Result<f64> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(
                "sup distance of functions on different grids".into(),
            ));
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .fold(0.0, |acc, (a, b)| acc.max((a - b).abs())))
    }

    /// Pointwise shift by a constant.
    pub fn shifted(&self, c: f64) -> GridFunction {
        GridFunction {
            grid: self.grid,
            values: self.values.iter().map(|v| v + c).collect(),
        }
    }
}
