//! The coupled mean-field system: find `m` with `m = pushforward(mu)` for a
//! minimizing measure `mu` of `L_m`, by damped fixed-point iteration over
//! the population measure. Assembles `(u, m, mu)` with discrete residual
//! certificates and demonstrates non-uniqueness on tied double wells.
//!
//! The set-valued existence argument is replaced by a single-valued damped
//! iteration with deterministic tie-breaking; non-convergence is reported,
//! never hidden, since solutions need not be unique.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::holonomic::{verify_minimizing, MinimizingMeasureReport};
use crate::lax_oleinik::{
    apply_discounted_operator, apply_ergodic_operator, backward_orbit, solve_discounted,
    solve_ergodic, DiscountMode, SolveReport,
};
use crate::measures::{d1_distance, pushforward, GridMeasure, PhaseMeasure, VelocityWindow};
use crate::models::{legendre_hamiltonian, EffectiveLagrangian};
use crate::problem::ProblemSpec;

/// Discrete residual certificate of an assembled solution.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Residuals {
    /// `||T u - u||_inf / tau`: the discrete Hamilton-Jacobi defect.
    pub hjb_residual: f64,
    /// Finite-difference defect `sup_x |lambda u + H(x, Du_h) - F(x, m)|`
    /// with one-sided differences and the numeric Legendre transform.
    /// Kinks are expected in the solutions, so this is display-only.
    pub hjb_fd_diagnostic: f64,
    /// Worst transport pairing `|sum mu <Df, v>|` over smooth test modes.
    pub continuity_residual: f64,
    /// Taylor bound `tau/2 * ||D2 f|| * E|v|^2` that the continuity
    /// residual of an exactly holonomic measure must respect.
    pub continuity_bound: f64,
    /// `d_1(m, pushforward(mu))` of the returned pair.
    pub coupling_gap: f64,
}

/// Assembled solution of one coupled solve.
#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub u: GridFunction,
    pub m: GridMeasure,
    pub mu: PhaseMeasure,
    pub solve_report: SolveReport,
    pub measure_report: MinimizingMeasureReport,
    pub residuals: Residuals,
    pub outer_iterations: usize,
    /// `d_1(pushforward(mu_k), m_k)` per outer iteration.
    pub d1_history: Vec<f64>,
    pub converged: bool,
}

/// One inner stage: value function, minimizing measure and its push-forward
/// for a frozen population measure.
struct Stage {
    u: GridFunction,
    report: SolveReport,
    mu: PhaseMeasure,
    push: GridMeasure,
    mode: DiscountMode,
    burn_in: usize,
    orbit_length: usize,
}

fn inner_stage(spec: &ProblemSpec, m: &GridMeasure) -> Result<Stage> {
    let (u, report) = if spec.is_ergodic() {
        solve_ergodic(spec, m)?
    } else {
        solve_discounted(spec, m)?
    };
    let mode = if spec.is_ergodic() {
        DiscountMode::Ergodic {
            lbar: report.lbar.expect("ergodic solve reports its eigenvalue"),
        }
    } else {
        DiscountMode::Discounted { lambda: spec.lambda }
    };
    let effective = EffectiveLagrangian::new(
        spec.lagrangian.clone(),
        spec.coupling.clone(),
        m.clone(),
        spec.grid,
    )?;
    let window = VelocityWindow::new(report.window_radius, spec.tau)?;
    let burn_in = spec.orbit.resolved_burn_in(spec.tau, spec.lambda);
    let orbit_length = spec.orbit.resolved_n_steps(spec.tau, spec.lambda);
    let base_tol = if spec.is_ergodic() {
        spec.tolerances.ergodic_span
    } else {
        spec.tolerances.value_iter
    };
    let defect_limit = 10.0 * base_tol;

    let seeds = spec.seed_indices();
    let per_seed: Vec<Result<std::collections::BTreeMap<_, u64>>> = seeds
        .par_iter()
        .map(|&seed| {
            let orbit = backward_orbit(
                &u,
                &effective,
                &window,
                mode,
                &spec.grid.point(seed),
                orbit_length,
                defect_limit,
            )?;
            if orbit.len() <= burn_in + 1 {
                return Err(Error::OrbitTooShort {
                    needed: burn_in + 1,
                    got: orbit.len(),
                });
            }
            Ok(crate::holonomic::orbit_counts(&orbit, burn_in))
        })
        .collect();

    let mut merged: std::collections::BTreeMap<_, u64> = std::collections::BTreeMap::new();
    for result in per_seed {
        for (atom, c) in result? {
            *merged.entry(atom).or_insert(0) += c;
        }
    }
    let mu = PhaseMeasure::from_counts(spec.grid, window, &merged)?;
    let push = pushforward(&mu);
    Ok(Stage {
        u,
        report,
        mu,
        push,
        mode,
        burn_in,
        orbit_length,
    })
}

fn assemble(
    spec: &ProblemSpec,
    m: GridMeasure,
    stage: Stage,
    gap: f64,
    outer_iterations: usize,
    d1_history: Vec<f64>,
    converged: bool,
) -> Result<MfgSolution> {
    let effective = EffectiveLagrangian::new(
        spec.lagrangian.clone(),
        spec.coupling.clone(),
        m.clone(),
        spec.grid,
    )?;
    let mut measure_report = verify_minimizing(&stage.mu, &stage.u, &effective, stage.mode)?;
    measure_report.burn_in = stage.burn_in;
    measure_report.orbit_length = stage.orbit_length;

    let (hjb, hjb_fd) = hjb_residual(&stage.u, &m, spec)?;
    let continuity = continuity_residual(&stage.mu, 3);
    let residuals = Residuals {
        hjb_residual: hjb,
        hjb_fd_diagnostic: hjb_fd,
        continuity_residual: continuity.residual,
        continuity_bound: continuity.taylor_bound,
        coupling_gap: gap,
    };
    Ok(MfgSolution {
        u: stage.u,
        m,
        mu: stage.mu,
        solve_report: stage.report,
        measure_report,
        residuals,
        outer_iterations,
        d1_history,
        converged,
    })
}

/// Solves the coupled system for `lambda > 0` by damped iteration
/// `m <- (1-theta) m + theta * pushforward(mu(m))`, stopping when the
/// consistency gap `d_1(pushforward(mu), m)` is within the fixed-point
/// tolerance. Returns the best iterate flagged non-converged when the gap
/// never closes.
pub fn solve_dmfg(spec: &ProblemSpec, m_init: &GridMeasure) -> Result<MfgSolution> {
    spec.validate()?;
    if spec.is_ergodic() {
        return Err(Error::InvalidSpec(
            "coupled discounted solve needs lambda > 0; use solve_ergodic_mfg".into(),
        ));
    }
    solve_coupled(spec, m_init)
}

/// Ergodic counterpart of [`solve_dmfg`]: the inner stage solves the
/// additive-eigenvalue equation and orbits step without discounting.
pub fn solve_ergodic_mfg(spec: &ProblemSpec, m_init: &GridMeasure) -> Result<MfgSolution> {
    spec.validate()?;
    if !spec.is_ergodic() {
        return Err(Error::InvalidSpec(
            "ergodic coupled solve needs lambda = 0".into(),
        ));
    }
    solve_coupled(spec, m_init)
}

fn solve_coupled(spec: &ProblemSpec, m_init: &GridMeasure) -> Result<MfgSolution> {
    if m_init.grid() != &spec.grid {
        return Err(Error::GridMismatch("initial measure on a different grid".into()));
    }
    // An m-independent coupling has a constant best-response map, so its
    // unique fixed point is reached undamped in one update.
    let theta = if spec.coupling.lipschitz_in_m == 0.0 {
        1.0
    } else {
        spec.tolerances.damping
    };
    let tol = spec.tolerances.fixed_point;

    let mut m = m_init.clone();
    let mut d1_history = Vec::new();
    let mut best: Option<(f64, GridMeasure, Stage)> = None;
    for outer in 0..=spec.tolerances.max_outer_iters {
        let stage = inner_stage(spec, &m)?;
        let gap = d1_distance(&stage.push, &m)?;
        d1_history.push(gap);
        if gap <= tol {
            return assemble(spec, m, stage, gap, outer, d1_history, true);
        }
        let next = m.blend(&stage.push, theta)?;
        if best.as_ref().is_none_or(|(g, _, _)| gap < *g) {
            best = Some((gap, m.clone(), stage));
        }
        m = next;
    }
    let (gap, m_best, stage) = best.expect("at least one outer iteration ran");
    assemble(
        spec,
        m_best,
        stage,
        gap,
        spec.tolerances.max_outer_iters,
        d1_history,
        false,
    )
}

/// Discrete Hamilton-Jacobi defect of a converged value function, plus the
/// finite-difference diagnostic. The first number is the certificate; the
/// second is display-only since viscosity solutions carry kinks.
pub fn hjb_residual(u: &GridFunction, m: &GridMeasure, spec: &ProblemSpec) -> Result<(f64, f64)> {
    let effective = EffectiveLagrangian::new(
        spec.lagrangian.clone(),
        spec.coupling.clone(),
        m.clone(),
        spec.grid,
    )?;
    let (window, _) = crate::lax_oleinik::resolve_window(spec, m)?;
    let primary = if spec.is_ergodic() {
        let tu = apply_ergodic_operator(u, &effective, &window)?;
        let lbar = (tu.value(0) - u.value(0)) / spec.tau;
        (0..spec.grid.len())
            .map(|i| (tu.value(i) - u.value(i) - spec.tau * lbar).abs())
            .fold(0.0_f64, f64::max)
            / spec.tau
    } else {
        let tu = apply_discounted_operator(u, &effective, spec.tau, spec.lambda, &window)?;
        tu.sup_distance(u)? / spec.tau
    };

    let diagnostic = fd_hjb_diagnostic(u, &effective, spec, &window)?;
    Ok((primary, diagnostic))
}

/// One-sided finite-difference defect. At each point the gradient choice
/// minimizing the defect is taken, which recognizes the one-sided gradients
/// that exist at kinks of the solution.
fn fd_hjb_diagnostic(
    u: &GridFunction,
    effective: &EffectiveLagrangian,
    spec: &ProblemSpec,
    window: &VelocityWindow,
) -> Result<f64> {
    let grid = spec.grid;
    let h = grid.spacing();
    let d = grid.dim();
    let vmax = window.max_speed(&grid).max(2.0) * 1.5;
    let mut worst = 0.0_f64;
    for i in 0..grid.len() {
        let x = grid.point(i);
        let mut one_sided: Vec<[f64; 2]> = Vec::with_capacity(d);
        for axis in 0..d {
            let mut fwd_steps = vec![0_i64; d];
            fwd_steps[axis] = 1;
            let fwd = (u.value(grid.shift(i, &fwd_steps)) - u.value(i)) / h;
            let mut bwd_steps = vec![0_i64; d];
            bwd_steps[axis] = -1;
            let bwd = (u.value(i) - u.value(grid.shift(i, &bwd_steps))) / h;
            one_sided.push([bwd, fwd]);
        }
        let mut best = f64::INFINITY;
        for combo in 0..(1usize << d) {
            let p: Vec<f64> = (0..d).map(|a| one_sided[a][(combo >> a) & 1]).collect();
            let ham = legendre_hamiltonian(effective.base(), &x, &p, vmax, 129)?;
            let defect =
                (spec.lambda * u.value(i) + ham - effective.coupling_at(i)).abs();
            best = best.min(defect);
        }
        worst = worst.max(best);
    }
    Ok(worst)
}

/// Transport-pairing residual of a phase measure against smooth Fourier
/// test modes, with the Taylor bound it must respect when the measure is
/// exactly holonomic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ContinuityReport {
    pub residual: f64,
    pub taylor_bound: f64,
}

/// `max_f |sum mu(x,v) <Df(x), v>|` over the first `modes` Fourier modes
/// per axis. For holonomic `mu` and smooth `f` this is `O(tau)` with
/// constant `||D2 f|| E|v|^2 / 2`.
pub fn continuity_residual(mu: &PhaseMeasure, modes: usize) -> ContinuityReport {
    let grid = *mu.grid();
    let window = *mu.window();
    let tau = window.tau;
    let two_pi = 2.0 * std::f64::consts::PI;

    let mut residual = 0.0_f64;
    for axis in 0..grid.dim() {
        for k in 1..=modes {
            let omega = two_pi * k as f64;
            // f = cos(omega x_a): Df_a = -omega sin(omega x_a).
            let mut pair_cos = 0.0;
            // f = sin(omega x_a): Df_a = omega cos(omega x_a).
            let mut pair_sin = 0.0;
            for ((index, offsets), w) in mu.atoms() {
                let x = grid.point(*index);
                let v = window.velocity_of(&grid, offsets);
                pair_cos += w * (-omega * (omega * x[axis]).sin()) * v[axis];
                pair_sin += w * (omega * (omega * x[axis]).cos()) * v[axis];
            }
            residual = residual.max(pair_cos.abs()).max(pair_sin.abs());
        }
    }

    let omega_max = two_pi * modes as f64;
    let second_moment = mu.integrate(|_, v| v.iter().map(|c| c * c).sum::<f64>());
    ContinuityReport {
        residual,
        taylor_bound: 0.5 * tau * omega_max * omega_max * second_moment,
    }
}

/// Outcome of the two-branch non-uniqueness demonstration.
#[derive(Debug)]
pub struct NonUniquenessDemo {
    pub solution_a: MfgSolution,
    pub solution_b: MfgSolution,
    /// `d_1(m_a, m_b)`.
    pub separation: f64,
    /// A quarter of the geodesic distance between the two seeds.
    pub threshold: f64,
    pub meets_criterion: bool,
}

/// Runs the coupled solve from point masses at two seeds concurrently.
/// With tied minimizers each branch settles into its own well, producing
/// two distinct solutions; the criterion asks the branches to stay at least
/// a quarter of the seed distance apart.
pub fn demonstrate_nonuniqueness(
    spec: &ProblemSpec,
    seed_a: &[f64],
    seed_b: &[f64],
) -> Result<NonUniquenessDemo> {
    spec.validate()?;
    let branch = |seed: &[f64]| -> Result<MfgSolution> {
        let index = spec.grid.nearest_index(seed);
        let branch_spec = spec.clone().with_seeds(vec![spec.grid.point(index)]);
        let m_init = GridMeasure::dirac(spec.grid, index);
        if spec.is_ergodic() {
            solve_ergodic_mfg(&branch_spec, &m_init)
        } else {
            solve_dmfg(&branch_spec, &m_init)
        }
    };
    let (res_a, res_b) = rayon::join(|| branch(seed_a), || branch(seed_b));
    let solution_a = res_a?;
    let solution_b = res_b?;
    for sol in [&solution_a, &solution_b] {
        if !sol.converged {
            return Err(Error::OuterNonConvergence {
                iterations: sol.outer_iterations,
                d1_history: sol.d1_history.clone(),
            });
        }
    }
    let separation = d1_distance(&solution_a.m, &solution_b.m)?;
    let ia = spec.grid.nearest_index(seed_a);
    let ib = spec.grid.nearest_index(seed_b);
    let threshold = 0.25 * spec.grid.geodesic_distance(ia, ib);
    Ok(NonUniquenessDemo {
        solution_a,
        solution_b,
        separation,
        threshold,
        meets_criterion: separation >= threshold,
    })
}
