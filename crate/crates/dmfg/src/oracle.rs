//! Closed-form reference values for the additive model family
//! `L = |v|^2/2`, `F(x, m) = f + g(x)`.
//!
//! For this family the rest curve at a minimizer `x0` of `g` is optimal, so
//! the discounted value at `x0` is `(f + min g) / lambda`, the same value is
//! a global pointwise lower bound (because `L_m >= f + min g` everywhere),
//! and the critical value is `c(m) = -(f + min g)`. Nothing is claimed away
//! from the minimizer set.

use crate::error::{Error, Result};
use crate::grid::GridFunction;

/// Reference values for the additive quadratic family.
#[derive(Debug, Clone)]
pub struct AdditiveModelOracle {
    f_const: f64,
    g: GridFunction,
    lambda: f64,
}

impl AdditiveModelOracle {
    pub fn new(f_const: f64, g: GridFunction, lambda: f64) -> Result<Self> {
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::InvalidSpec(format!(
                "oracle needs lambda > 0, got {lambda}"
            )));
        }
        Ok(Self { f_const, g, lambda })
    }

    pub fn min_g(&self) -> f64 {
        self.g.min()
    }

    /// Indices of the grid points attaining `min g` (exact value ties).
    pub fn minimizer_indices(&self) -> Vec<usize> {
        let min = self.min_g();
        (0..self.g.grid().len())
            .filter(|&i| self.g.value(i) == min)
            .collect()
    }

    /// Value of the discounted solution at any minimizer of `g`:
    /// `(f + min g) / lambda`.
    pub fn value_at_minimizer(&self) -> f64 {
        (self.f_const + self.min_g()) / self.lambda
    }

    /// Pointwise lower bound valid everywhere: any solve output must
    /// dominate `(f + min g) / lambda` at every grid point.
    pub fn global_lower_bound(&self, _x: &[f64]) -> f64 {
        (self.f_const + self.min_g()) / self.lambda
    }

    /// Critical value `c(m) = -(f + min g)` of the effective Lagrangian.
    pub fn critical_value(&self) -> f64 {
        -(self.f_const + self.min_g())
    }
}
