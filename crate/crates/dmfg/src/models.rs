//! Tonelli Lagrangians, mean-field couplings `F(x, m)`, the effective
//! Lagrangian `L_m(x,v) = L(x,v) + F(x,m)`, and a numeric Legendre
//! transform.
//!
//! Built-in models: the quadratic kinetic energy `L = |v|^2 / 2`, the
//! m-independent additive coupling `F = f + g(x)`, and a convolution
//! coupling `F = g(x) + eps * sum_y cos(2 pi (x - y)) m(y)` that exercises
//! genuine dependence on the population measure.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::TorusGrid;
use crate::measures::GridMeasure;

pub type PointFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type PointGradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;
pub type CouplingFn = Arc<dyn Fn(&[f64], &GridMeasure) -> f64 + Send + Sync>;
type XvFn = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
type XvGradFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;

/// A Lagrangian `L(x, v)` with its velocity and position gradients and an
/// optional superlinearity witness `K -> C(K)` with
/// `L(x,v) >= K|v| + C(K)`.
#[derive(Clone)]
pub struct LagrangianModel {
    eval: XvFn,
    grad_v: XvGradFn,
    grad_x: XvGradFn,
    superlinearity_margin: Option<Arc<dyn Fn(f64) -> f64 + Send + Sync>>,
}

impl LagrangianModel {
    pub fn new(eval: XvFn, grad_v: XvGradFn, grad_x: XvGradFn) -> Self {
        Self {
            eval,
            grad_v,
            grad_x,
            superlinearity_margin: None,
        }
    }

    pub fn with_superlinearity_margin(
        mut self,
        margin: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    ) -> Self {
        self.superlinearity_margin = Some(margin);
        self
    }

    /// Kinetic energy `|v|^2 / 2`. Satisfies `L >= K|v| - K^2/2`.
    pub fn quadratic() -> Self {
        Self {
            eval: Arc::new(|_x, v| 0.5 * v.iter().map(|c| c * c).sum::<f64>()),
            grad_v: Arc::new(|_x, v| v.to_vec()),
            grad_x: Arc::new(|x, _v| vec![0.0; x.len()]),
            superlinearity_margin: Some(Arc::new(|k| -0.5 * k * k)),
        }
    }

    /// Kinetic energy plus a position potential, `|v|^2/2 + V(x)`, with the
    /// position gradient supplied explicitly.
    pub fn mechanical(potential: PointFn, potential_grad: PointGradFn) -> Self {
        let v_pot = potential.clone();
        Self {
            eval: Arc::new(move |x, v| {
                0.5 * v.iter().map(|c| c * c).sum::<f64>() + v_pot(x)
            }),
            grad_v: Arc::new(|_x, v| v.to_vec()),
            grad_x: Arc::new(move |x, _v| potential_grad(x)),
            superlinearity_margin: None,
        }
    }

    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        (self.eval)(x, v)
    }

    pub fn grad_v(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        (self.grad_v)(x, v)
    }

    pub fn grad_x(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        (self.grad_x)(x, v)
    }

    pub fn superlinearity_margin(&self, k: f64) -> Option<f64> {
        self.superlinearity_margin.as_ref().map(|f| f(k))
    }
}

impl std::fmt::Debug for LagrangianModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LagrangianModel").finish_non_exhaustive()
    }
}

/// A coupling `F(x, m)` together with its declared Lipschitz constant in
/// the measure argument (with respect to `d_1`) and a uniform bound.
#[derive(Clone)]
pub struct CouplingModel {
    eval: CouplingFn,
    pub lipschitz_in_m: f64,
    pub sup_bound: f64,
}

impl CouplingModel {
    pub fn new(eval: CouplingFn, lipschitz_in_m: f64, sup_bound: f64) -> Self {
        Self {
            eval,
            lipschitz_in_m,
            sup_bound,
        }
    }

    /// m-independent coupling `F(x, m) = f + g(x)`.
    pub fn additive(f_const: f64, g: PointFn, g_sup: f64) -> Self {
        Self {
            eval: Arc::new(move |x, _m| f_const + g(x)),
            lipschitz_in_m: 0.0,
            sup_bound: f_const.abs() + g_sup,
        }
    }

    /// Convolution coupling
    /// `F(x, m) = f + g(x) + eps * sum_y cos(2 pi (x - y) . 1) m(y)`.
    /// The kernel is 2 pi Lipschitz in each `y`, hence `Lip(F) = 2 pi eps`.
    pub fn convolution(f_const: f64, g: PointFn, g_sup: f64, eps: f64) -> Self {
        Self {
            eval: Arc::new(move |x, m| {
                let grid = m.grid();
                let conv: f64 = (0..grid.len())
                    .map(|j| {
                        let y = grid.point(j);
                        let phase: f64 = x
                            .iter()
                            .zip(&y)
                            .map(|(xc, yc)| xc - yc)
                            .sum();
                        m.weight(j) * (2.0 * std::f64::consts::PI * phase).cos()
                    })
                    .sum();
                f_const + g(x) + eps * conv
            }),
            lipschitz_in_m: 2.0 * std::f64::consts::PI * eps,
            sup_bound: f_const.abs() + g_sup + eps.abs(),
        }
    }

    pub fn eval(&self, x: &[f64], m: &GridMeasure) -> f64 {
        (self.eval)(x, m)
    }
}

impl std::fmt::Debug for CouplingModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CouplingModel")
            .field("lipschitz_in_m", &self.lipschitz_in_m)
            .field("sup_bound", &self.sup_bound)
            .finish_non_exhaustive()
    }
}

/// `L_m(x,v) = L(x,v) + F(x,m)` with the measure frozen at construction.
/// The coupling is precomputed on an evaluation grid so that the solvers
/// never re-evaluate `F` in their inner loops.
#[derive(Clone)]
pub struct EffectiveLagrangian {
    base: LagrangianModel,
    coupling: CouplingModel,
    measure: GridMeasure,
    grid: TorusGrid,
    coupling_on_grid: Vec<f64>,
}

impl EffectiveLagrangian {
    /// Freezes `m` and samples `F(., m)` on `grid` (which may differ from
    /// the measure's own grid, e.g. for pilot solves).
    pub fn new(
        base: LagrangianModel,
        coupling: CouplingModel,
        measure: GridMeasure,
        grid: TorusGrid,
    ) -> Result<Self> {
        let coupling_on_grid: Vec<f64> = (0..grid.len())
            .map(|i| coupling.eval(&grid.point(i), &measure))
            .collect();
        if let Some(bad) = coupling_on_grid.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "coupling value at grid point {:?}",
                grid.point(bad)
            )));
        }
        Ok(Self {
            base,
            coupling,
            measure,
            grid,
            coupling_on_grid,
        })
    }

    pub fn base(&self) -> &LagrangianModel {
        &self.base
    }

    pub fn coupling(&self) -> &CouplingModel {
        &self.coupling
    }

    pub fn measure(&self) -> &GridMeasure {
        &self.measure
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    /// `F(x_i, m)` at an evaluation-grid point.
    pub fn coupling_at(&self, index: usize) -> f64 {
        self.coupling_on_grid[index]
    }

    /// `L_m` at an arbitrary point of the torus.
    pub fn eval(&self, x: &[f64], v: &[f64]) -> f64 {
        self.base.eval(x, v) + self.coupling.eval(x, &self.measure)
    }

    /// `L_m` at an evaluation-grid point.
    pub fn eval_at(&self, index: usize, v: &[f64]) -> f64 {
        self.base.eval(&self.grid.point(index), v) + self.coupling_on_grid[index]
    }
}

impl std::fmt::Debug for EffectiveLagrangian {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EffectiveLagrangian")
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

/// Hamiltonian `H(x, p) = sup_v <p, v> - L(x, v)` by exhaustive search over
/// a uniform velocity lattice on `[-vmax, vmax]^d`. Robust, diagnostic-grade
/// accuracy; no Newton refinement.
pub fn legendre_hamiltonian(
    lagrangian: &LagrangianModel,
    x: &[f64],
    p: &[f64],
    vmax: f64,
    nv: usize,
) -> Result<f64> {
    if nv < 3 {
        return Err(Error::InvalidSpec(format!("legendre lattice needs nv >= 3, got {nv}")));
    }
    if !vmax.is_finite() || vmax <= 0.0 {
        return Err(Error::InvalidSpec(format!("legendre window needs vmax > 0, got {vmax}")));
    }
    let d = p.len();
    let step = 2.0 * vmax / (nv - 1) as f64;
    let coord = |k: usize| -vmax + k as f64 * step;

    let mut best = f64::NEG_INFINITY;
    let total = nv.pow(d as u32);
    let mut v = vec![0.0; d];
    for flat in 0..total {
        let mut rem = flat;
        for vc in v.iter_mut().rev() {
            *vc = coord(rem % nv);
            rem /= nv;
        }
        let lv = lagrangian.eval(x, &v);
        if !lv.is_finite() {
            return Err(Error::NonFinite(format!(
                "Lagrangian at x={x:?}, v={v:?} is {lv}"
            )));
        }
        let dual: f64 = p.iter().zip(&v).map(|(pc, vc)| pc * vc).sum::<f64>() - lv;
        if dual > best {
            best = dual;
        }
    }
    Ok(best)
}

// Built-in potentials selectable from configs.

/// `g(x) = sum_a sin^2(pi x_a)`: a single well at the origin per axis.
pub fn potential_sin_sq() -> PointFn {
    Arc::new(|x| {
        x.iter()
            .map(|&c| (std::f64::consts::PI * c).sin().powi(2))
            .sum()
    })
}

/// `g(x) = sum_a (1 - cos(4 pi x_a)) / 2`: two wells per axis, at 0 and 1/2,
/// with exactly tied minima.
pub fn potential_two_well() -> PointFn {
    Arc::new(|x| {
        x.iter()
            .map(|&c| 0.5 * (1.0 - (4.0 * std::f64::consts::PI * c).cos()))
            .sum()
    })
}

/// Potential given by a table of values on a grid; evaluation snaps to the
/// nearest grid point.
pub fn potential_table(grid: TorusGrid, values: Vec<f64>) -> Result<PointFn> {
    if values.len() != grid.len() {
        return Err(Error::GridMismatch(format!(
            "potential table needs {} values, got {}",
            grid.len(),
            values.len()
        )));
    }
    if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("potential table entry {bad}")));
    }
    Ok(Arc::new(move |x| values[grid.nearest_index(x)]))
}

pub fn potential_zero() -> PointFn {
    Arc::new(|_| 0.0)
}

/// The quadratic-kinetic, m-independent model family: `L = |v|^2/2` and
/// `F(x, m) = f + g(x)`. This is the family with closed-form reference
/// values at the minimizers of `g`.
pub fn additive_quadratic_model(
    f_const: f64,
    g: PointFn,
    g_sup: f64,
) -> (LagrangianModel, CouplingModel) {
    (
        LagrangianModel::quadratic(),
        CouplingModel::additive(f_const, g, g_sup),
    )
}
