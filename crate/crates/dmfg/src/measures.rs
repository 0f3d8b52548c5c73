//! Probability measures on the torus grid and on the discrete phase space,
//! the Kantorovich-Rubinstein distance `d_1`, push-forwards, and holonomy
//! residuals.
//!
//! Phase-space velocities are always integer multiples of `h/tau`, so the
//! one-step shift `x -> x + tau*v` lands on a grid point exactly and the
//! holonomy identity can be tested with zero interpolation error.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TorusGrid};

const MASS_TOL: f64 = 1e-12;

/// Probability weights on the points of a [`TorusGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    grid: TorusGrid,
    weights: Vec<f64>,
}

impl GridMeasure {
    pub fn new(grid: TorusGrid, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != grid.len() {
            return Err(Error::GridMismatch(format!(
                "expected {} weights, got {}",
                grid.len(),
                weights.len()
            )));
        }
        if let Some(bad) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "weight at index {bad} is {}",
                weights[bad]
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "weights sum to {total}, not 1"
            )));
        }
        Ok(Self { grid, weights })
    }

    /// Normalizes nonnegative weights to total mass one.
    pub fn normalized(grid: TorusGrid, weights: Vec<f64>) -> Result<Self> {
        let total: f64 = weights.iter().sum();
        if !(total.is_finite() && total > 0.0) {
            return Err(Error::InvalidMeasure(format!(
                "cannot normalize weights with total {total}"
            )));
        }
        Self::new(grid, weights.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(grid: TorusGrid) -> Self {
        let w = 1.0 / grid.len() as f64;
        Self {
            grid,
            weights: vec![w; grid.len()],
        }
    }

    /// Point mass at one grid point.
    pub fn dirac(grid: TorusGrid, index: usize) -> Self {
        let mut weights = vec![0.0; grid.len()];
        weights[index] = 1.0;
        Self { grid, weights }
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, index: usize) -> f64 {
        self.weights[index]
    }

    /// Convex combination `(1-theta)*self + theta*other`, renormalized to
    /// keep the total mass at exactly one.
    pub fn blend(&self, other: &GridMeasure, theta: f64) -> Result<GridMeasure> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch("blending measures on different grids".into()));
        }
        let weights: Vec<f64> = self
            .weights
            .iter()
            .zip(&other.weights)
            .map(|(a, b)| (1.0 - theta) * a + theta * b)
            .collect();
        GridMeasure::normalized(self.grid, weights)
    }

    /// Expectation of a grid function.
    pub fn integrate(&self, f: &GridFunction) -> Result<f64> {
        if *f.grid() != self.grid {
            return Err(Error::GridMismatch("integrating against a different grid".into()));
        }
        Ok(self
            .weights
            .iter()
            .zip(f.values())
            .map(|(w, v)| w * v)
            .sum())
    }
}

/// Velocity lattice attached to a time step: admissible velocities are
/// `k*h/tau` with integer offsets `k` in `[-W, W]^d`, so every one-step move
/// stays on the grid. The maximal speed `W*h/tau` plays the role of the
/// a-priori bound on minimizer velocities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VelocityWindow {
    pub radius_steps: usize,
    pub tau: f64,
}

impl VelocityWindow {
    pub fn new(radius_steps: usize, tau: f64) -> Result<Self> {
        if radius_steps < 1 {
            return Err(Error::InvalidSpec("window radius must be >= 1".into()));
        }
        if !(tau > 0.0 && tau < 1.0) {
            return Err(Error::InvalidSpec(format!("tau must lie in (0,1), got {tau}")));
        }
        Ok(Self { radius_steps, tau })
    }

    /// Largest admissible speed `W*h/tau` on the given grid.
    pub fn max_speed(&self, grid: &TorusGrid) -> f64 {
        let w = self
            .radius_steps
            .min(grid.n_per_axis() / 2)
            .max(1) as f64;
        let per_axis = w * grid.spacing() / self.tau;
        (per_axis * per_axis * grid.dim() as f64).sqrt()
    }

    /// Velocity vector of an integer offset on the given grid.
    pub fn velocity_of(&self, grid: &TorusGrid, offsets: &[i64]) -> Vec<f64> {
        offsets
            .iter()
            .map(|&k| k as f64 * grid.spacing() / self.tau)
            .collect()
    }

    /// All admissible offsets on a grid, sorted lexicographically and
    /// restricted to minimal-norm lifts.
    pub fn offsets(&self, grid: &TorusGrid) -> Vec<Vec<i64>> {
        let axis = grid.axis_offsets(self.radius_steps);
        match grid.dim() {
            1 => axis.iter().map(|&k| vec![k]).collect(),
            _ => {
                let mut out = Vec::with_capacity(axis.len() * axis.len());
                for &k0 in &axis {
                    for &k1 in &axis {
                        out.push(vec![k0, k1]);
                    }
                }
                out
            }
        }
    }

    pub fn contains(&self, grid: &TorusGrid, offsets: &[i64]) -> bool {
        let admissible = grid.axis_offsets(self.radius_steps);
        offsets.iter().all(|k| admissible.contains(k))
    }
}

/// Atom key of a phase measure: grid-point index plus velocity offset.
pub type PhaseAtom = (usize, Vec<i64>);

/// Probability weights on (grid point, velocity) pairs. Stored sparsely with
/// sorted keys so that aggregation is order-independent.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseMeasure {
    grid: TorusGrid,
    window: VelocityWindow,
    atoms: BTreeMap<PhaseAtom, f64>,
}

impl PhaseMeasure {
    pub fn new(
        grid: TorusGrid,
        window: VelocityWindow,
        atoms: BTreeMap<PhaseAtom, f64>,
    ) -> Result<Self> {
        let mut total = 0.0;
        for ((index, offsets), &w) in &atoms {
            if *index >= grid.len() || offsets.len() != grid.dim() {
                return Err(Error::InvalidMeasure(format!(
                    "atom ({index}, {offsets:?}) does not address the grid"
                )));
            }
            if !window.contains(&grid, offsets) {
                return Err(Error::OutOfWindow(format!(
                    "atom offset {offsets:?} outside radius {}",
                    window.radius_steps
                )));
            }
            if !w.is_finite() || w < 0.0 {
                return Err(Error::InvalidMeasure(format!("atom weight {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::InvalidMeasure(format!(
                "phase weights sum to {total}, not 1"
            )));
        }
        Ok(Self { grid, window, atoms })
    }

    /// Builds a phase measure from integer visit counts; exact ratios keep
    /// the result independent of accumulation order.
    pub fn from_counts(
        grid: TorusGrid,
        window: VelocityWindow,
        counts: &BTreeMap<PhaseAtom, u64>,
    ) -> Result<Self> {
        let total: u64 = counts.values().sum();
        if total == 0 {
            return Err(Error::InvalidMeasure("no atoms with positive count".into()));
        }
        let atoms = counts
            .iter()
            .map(|(k, &c)| (k.clone(), c as f64 / total as f64))
            .collect();
        Self::new(grid, window, atoms)
    }

    pub fn dirac(grid: TorusGrid, window: VelocityWindow, atom: PhaseAtom) -> Result<Self> {
        let mut atoms = BTreeMap::new();
        atoms.insert(atom, 1.0);
        Self::new(grid, window, atoms)
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn window(&self) -> &VelocityWindow {
        &self.window
    }

    pub fn atoms(&self) -> &BTreeMap<PhaseAtom, f64> {
        &self.atoms
    }

    /// Largest speed carried by any atom.
    pub fn max_atom_speed(&self) -> f64 {
        self.atoms
            .keys()
            .map(|(_, offsets)| {
                self.window
                    .velocity_of(&self.grid, offsets)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Expectation of a function of (point coordinates, velocity).
    pub fn integrate<F: Fn(&[f64], &[f64]) -> f64>(&self, f: F) -> f64 {
        self.atoms
            .iter()
            .map(|((index, offsets), w)| {
                let x = self.grid.point(*index);
                let v = self.window.velocity_of(&self.grid, offsets);
                w * f(&x, &v)
            })
            .sum()
    }
}

/// Marginal of a phase measure on the torus: `m(x) = sum_v mu(x, v)`.
/// Total mass is preserved exactly up to summation order.
pub fn pushforward(mu: &PhaseMeasure) -> GridMeasure {
    let grid = *mu.grid();
    let mut weights = vec![0.0; grid.len()];
    for ((index, _), w) in mu.atoms() {
        weights[*index] += w;
    }
    GridMeasure { grid, weights }
}

/// Test functions for holonomy checks: all single-point indicators plus the
/// first two Fourier modes per axis. Indicators span every grid function;
/// the smooth modes mirror continuous test functions.
pub fn holonomy_test_functions(grid: TorusGrid) -> Vec<GridFunction> {
    let mut fns = Vec::with_capacity(grid.len() + 4 * grid.dim());
    for i in 0..grid.len() {
        let mut values = vec![0.0; grid.len()];
        values[i] = 1.0;
        fns.push(GridFunction::new(grid, values).expect("indicator is finite"));
    }
    for axis in 0..grid.dim() {
        for k in 1..=2 {
            let omega = 2.0 * std::f64::consts::PI * k as f64;
            fns.push(
                GridFunction::sample(grid, |x| (omega * x[axis]).cos())
                    .expect("cosine mode is finite"),
            );
            fns.push(
                GridFunction::sample(grid, |x| (omega * x[axis]).sin())
                    .expect("sine mode is finite"),
            );
        }
    }
    fns
}

/// Worst violation of the holonomy identity
/// `sum mu(x,v) (phi(x + tau v) - phi(x)) = 0` over the given test
/// functions. Zero exactly on holonomic measures.
pub fn holonomy_residual(mu: &PhaseMeasure, test_fns: &[GridFunction]) -> Result<f64> {
    let grid = mu.grid();
    let mut worst = 0.0_f64;
    for phi in test_fns {
        if phi.grid() != grid {
            return Err(Error::GridMismatch("test function on a different grid".into()));
        }
        let mut acc = 0.0;
        for ((index, offsets), w) in mu.atoms() {
            let dest = grid.shift(*index, offsets);
            acc += w * (phi.value(dest) - phi.value(*index));
        }
        worst = worst.max(acc.abs());
    }
    Ok(worst)
}

/// Kantorovich-Rubinstein distance between grid measures.
///
/// In one dimension this is the exact circular transport distance; in two
/// dimensions it falls back to entropic-regularized transport and is meant
/// as a convergence diagnostic only.
pub fn d1_distance(m1: &GridMeasure, m2: &GridMeasure) -> Result<f64> {
    if m1.grid() != m2.grid() {
        return Err(Error::GridMismatch("d1 of measures on different grids".into()));
    }
    match m1.grid().dim() {
        1 => Ok(circular_w1(m1, m2)),
        _ => Ok(sinkhorn_w1(m1, m2)),
    }
}

/// Exact `W_1` on the discrete circle. With cumulative differences `D_k`,
/// the optimal flow across each edge is `D_k - t` for a scalar cut value
/// `t`, and the cost `h * sum_k |D_k - t|` is minimized by the median.
fn circular_w1(m1: &GridMeasure, m2: &GridMeasure) -> f64 {
    let n = m1.grid().n_per_axis();
    let h = m1.grid().spacing();
    let mut cum = Vec::with_capacity(n);
    let mut acc = 0.0;
    for i in 0..n {
        acc += m1.weight(i) - m2.weight(i);
        cum.push(acc);
    }
    let mut sorted = cum.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite cumulative differences"));
    let median = sorted[(n - 1) / 2];
    cum.iter().map(|d| (d - median).abs()).sum::<f64>() * h
}

/// Entropic transport with regularization `1e-3 * h` and 500 log-domain
/// sweeps. Diagnostic accuracy only; never used inside an acceptance bound.
fn sinkhorn_w1(m1: &GridMeasure, m2: &GridMeasure) -> f64 {
    let grid = m1.grid();
    let n = grid.len();
    let reg = 1e-3 * grid.spacing();
    let cost: Vec<f64> = (0..n * n)
        .map(|ij| grid.geodesic_distance(ij / n, ij % n))
        .collect();

    let log_a: Vec<f64> = m1.weights().iter().map(|w| w.max(1e-300).ln()).collect();
    let log_b: Vec<f64> = m2.weights().iter().map(|w| w.max(1e-300).ln()).collect();
    let mut f = vec![0.0_f64; n];
    let mut g = vec![0.0_f64; n];

    let logsumexp = |terms: &mut dyn Iterator<Item = f64>| -> f64 {
        let vals: Vec<f64> = terms.collect();
        let m = vals.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        if !m.is_finite() {
            return m;
        }
        m + vals.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
    };

    for _ in 0..500 {
        for i in 0..n {
            let mut it = (0..n).map(|j| (g[j] - cost[i * n + j]) / reg + log_b[j]);
            f[i] = -reg * logsumexp(&mut it);
        }
        for j in 0..n {
            let mut it = (0..n).map(|i| (f[i] - cost[i * n + j]) / reg + log_a[i]);
            g[j] = -reg * logsumexp(&mut it);
        }
    }

    let mut total = 0.0;
    for i in 0..n {
        for j in 0..n {
            let log_pi = (f[i] + g[j] - cost[i * n + j]) / reg + log_a[i] + log_b[j];
            total += log_pi.exp() * cost[i * n + j];
        }
    }
    total
}
