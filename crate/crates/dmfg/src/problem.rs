//! The full input of one solve: model, grid, time step, discount rate,
//! window, tolerances, and orbit seeds.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::measures::VelocityWindow;
use crate::models::{CouplingModel, LagrangianModel};

/// Solver tolerances and iteration budgets.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Tolerances {
    /// Sup-norm change that stops discounted value iteration.
    pub value_iter: f64,
    /// Span of the per-sweep shift that stops ergodic value iteration.
    pub ergodic_span: f64,
    /// `d_1` gap that stops the coupled measure iteration.
    pub fixed_point: f64,
    /// Damping factor `theta` of the measure update, in (0, 1].
    pub damping: f64,
    /// Cap on coupled outer iterations.
    pub max_outer_iters: usize,
    /// Cap on value-iteration sweeps.
    pub max_value_iters: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            value_iter: 1e-10,
            ergodic_span: 1e-9,
            fixed_point: 1e-5,
            damping: 0.5,
            max_outer_iters: 200,
            max_value_iters: 500_000,
        }
    }
}

/// Orbit lengths used when building empirical measures. `None` fields fall
/// back to mode-dependent defaults.
#[derive(Debug, Clone, Copy, Default, Serialize)]
pub struct OrbitParams {
    pub n_steps: Option<usize>,
    pub burn_in: Option<usize>,
}

impl OrbitParams {
    /// Default burn-in: `10/(tau*lambda)` steps in the discounted case,
    /// `50/tau` in the ergodic case.
    pub fn default_burn_in(tau: f64, lambda: f64) -> usize {
        if lambda > 0.0 {
            (10.0 / (tau * lambda)).ceil() as usize
        } else {
            (50.0 / tau).ceil() as usize
        }
    }

    pub fn resolved_burn_in(&self, tau: f64, lambda: f64) -> usize {
        self.burn_in
            .unwrap_or_else(|| Self::default_burn_in(tau, lambda))
    }

    /// Total steps for the reported measure; long enough that the
    /// telescoping holonomy bound `2/(n - burn_in)` sits at `1e-4`.
    pub fn resolved_n_steps(&self, tau: f64, lambda: f64) -> usize {
        self.n_steps
            .unwrap_or_else(|| self.resolved_burn_in(tau, lambda) + 20_000)
    }
}

/// Everything one solve needs. Immutable after construction.
#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub lagrangian: LagrangianModel,
    pub coupling: CouplingModel,
    pub grid: TorusGrid,
    /// Explicit velocity window; `None` resolves it by the pilot rule.
    pub window: Option<VelocityWindow>,
    pub tau: f64,
    /// Discount rate; 0 selects the ergodic problem.
    pub lambda: f64,
    pub tolerances: Tolerances,
    /// Orbit seeds as torus points; empty falls back to the reference
    /// points 0, 1/4, 1/2, 3/4 per axis.
    pub seeds: Vec<Vec<f64>>,
    pub orbit: OrbitParams,
    /// Echoed into outputs; reserved for randomized extensions.
    pub rng_seed: u64,
}

impl ProblemSpec {
    pub fn new(
        lagrangian: LagrangianModel,
        coupling: CouplingModel,
        grid: TorusGrid,
        tau: f64,
        lambda: f64,
    ) -> Result<Self> {
        let spec = Self {
            lagrangian,
            coupling,
            grid,
            window: None,
            tau,
            lambda,
            tolerances: Tolerances::default(),
            seeds: Vec::new(),
            orbit: OrbitParams::default(),
            rng_seed: 0,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_window(mut self, window: VelocityWindow) -> Self {
        self.window = Some(window);
        self
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn with_seeds(mut self, seeds: Vec<Vec<f64>>) -> Self {
        self.seeds = seeds;
        self
    }

    pub fn with_orbit(mut self, orbit: OrbitParams) -> Self {
        self.orbit = orbit;
        self
    }

    pub fn with_rng_seed(mut self, rng_seed: u64) -> Self {
        self.rng_seed = rng_seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.tau * self.lambda >= 1.0 {
            return Err(Error::InvalidSpec(format!(
                "tau*lambda must be < 1, got {}",
                self.tau * self.lambda
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(Error::InvalidSpec(format!(
                "tau must lie in (0,1), got {}",
                self.tau
            )));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidSpec(format!(
                "lambda must lie in [0,1], got {}",
                self.lambda
            )));
        }
        let theta = self.tolerances.damping;
        if !(theta > 0.0 && theta <= 1.0) {
            return Err(Error::InvalidSpec(format!(
                "damping theta must lie in (0,1], got {theta}"
            )));
        }
        if let Some(w) = &self.window {
            if (w.tau - self.tau).abs() > 1e-15 {
                return Err(Error::InvalidSpec(
                    "window tau differs from spec tau".into(),
                ));
            }
        }
        for seed in &self.seeds {
            if seed.len() != self.grid.dim() {
                return Err(Error::InvalidSpec(format!(
                    "seed {seed:?} has wrong dimension"
                )));
            }
        }
        Ok(())
    }

    /// Seeds resolved to grid indices; defaults to the per-axis reference
    /// points 0, 1/4, 1/2, 3/4 (diagonal in two dimensions).
    pub fn seed_indices(&self) -> Vec<usize> {
        if self.seeds.is_empty() {
            reference_points(&self.grid)
        } else {
            self.seeds
                .iter()
                .map(|p| self.grid.nearest_index(p))
                .collect()
        }
    }

    /// Whether this spec selects the ergodic (undiscounted) problem.
    pub fn is_ergodic(&self) -> bool {
        self.lambda == 0.0
    }
}

/// Grid images of the reference points 0, 1/4, 1/2, 3/4 per axis; the
/// diagonal is used in two dimensions.
pub fn reference_points(grid: &TorusGrid) -> Vec<usize> {
    [0.0, 0.25, 0.5, 0.75]
        .iter()
        .map(|&c| grid.nearest_index(&vec![c; grid.dim()]))
        .collect()
}
