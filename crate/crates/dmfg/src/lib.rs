//! Numerical weak-KAM machinery for first-order discounted mean field
//! games on the flat torus, discretized in time.
//!
//! The building blocks: torus grids and grid measures with the exact
//! circular `d_1` distance; discrete Lax-Oleinik operators and their fixed
//! points by value iteration; backward calibrated orbits and the holonomic
//! measures obtained by Cesaro averaging along them; the coupled
//! consistency fixed point `m = pushforward(mu)` solved by damped
//! iteration; and sweep drivers for the vanishing-discount and
//! vanishing-time-step limits.

pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod holonomic;
pub mod io;
pub mod lax_oleinik;
pub mod limits;
pub mod measures;
pub mod mfg;
pub mod models;
pub mod oracle;
pub mod problem;

pub use error::{Error, Result};
pub use grid::{GridFunction, TorusGrid};
pub use holonomic::{
    approximate_aubry, empirical_measure, estimate_critical_value, estimate_lbar,
    extrapolate_critical_value, verify_minimizing, AubryApproximation, LbarMethod,
    MinimizingMeasureReport,
};
pub use lax_oleinik::{
    apply_discounted_operator, apply_ergodic_operator, backward_orbit, discrete_action,
    discrete_action_in_window, resolve_window, solve_discounted, solve_discounted_with_init,
    solve_ergodic, ActionTable, CalibratedOrbit, DiscountMode, SolveReport,
};
pub use limits::{fit_through_origin, sweep_lambda, sweep_tau, LambdaShift, SweepRecord, SweepTable};
pub use measures::{
    d1_distance, holonomy_residual, holonomy_test_functions, pushforward, GridMeasure,
    PhaseAtom, PhaseMeasure, VelocityWindow,
};
pub use mfg::{
    continuity_residual, demonstrate_nonuniqueness, hjb_residual, solve_dmfg, solve_ergodic_mfg,
    ContinuityReport, MfgSolution, NonUniquenessDemo, Residuals,
};
pub use models::{
    additive_quadratic_model, legendre_hamiltonian, potential_sin_sq, potential_table,
    potential_two_well, potential_zero, CouplingModel, EffectiveLagrangian, LagrangianModel,
    PointFn,
};
pub use oracle::AdditiveModelOracle;
pub use problem::{reference_points, OrbitParams, ProblemSpec, Tolerances};
