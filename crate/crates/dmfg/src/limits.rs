//! Experiment drivers for the two limit processes: vanishing discount
//! `lambda -> 0` at fixed `tau` (with either the discrete shift
//! `Lbar/lambda` or the extrapolated critical-value shift `c/lambda`), and
//! discretization `tau -> 0` at fixed `lambda`.
//!
//! The underlying convergence statements are subsequential, so sweeps
//! report Cauchy distances between consecutive rows and never assert that a
//! limit exists. Rows run concurrently; a solver failure flags its row and
//! the sweep continues.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::holonomic::{
    estimate_critical_value, estimate_lbar, extrapolate_critical_value, LbarMethod,
};
use crate::measures::{d1_distance, GridMeasure};
use crate::mfg::{solve_dmfg, solve_ergodic_mfg, MfgSolution};
use crate::problem::{reference_points, ProblemSpec};

/// One row of a sweep table.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRecord {
    /// The swept parameter (lambda or tau).
    pub param: f64,
    /// Sup-norm of the (shifted) value function.
    pub u_sup: f64,
    /// Shifted value at the reference points 0, 1/4, 1/2, 3/4.
    pub u_ref: [f64; 4],
    /// Sup-norm Cauchy distance to the previous row (NaN on the first or
    /// next to a failed row).
    pub sup_cauchy: f64,
    /// `d_1` Cauchy distance of the population measure.
    pub d1_cauchy: f64,
    /// `Lbar(tau, m)` for the discrete shift, the extrapolated critical
    /// value for the continuum shift, or `Lbar` along a tau sweep.
    pub lbar_or_c: f64,
    pub hjb_res: f64,
    pub holo_res: f64,
    pub coupling_gap: f64,
    /// Wall-clock seconds of the row; reported in the JSON sidecar only so
    /// the CSV stays byte-reproducible.
    pub seconds: f64,
    pub converged: bool,
}

impl SweepRecord {
    fn failed(param: f64, seconds: f64) -> Self {
        Self {
            param,
            u_sup: f64::NAN,
            u_ref: [f64::NAN; 4],
            sup_cauchy: f64::NAN,
            d1_cauchy: f64::NAN,
            lbar_or_c: f64::NAN,
            hjb_res: f64::NAN,
            holo_res: f64::NAN,
            coupling_gap: f64::NAN,
            seconds,
            converged: false,
        }
    }
}

/// A finished sweep: rows ordered by decreasing parameter, per-row failure
/// messages, and the optional comparison of the final discounted row
/// against the direct ergodic coupled solve.
#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub records: Vec<SweepRecord>,
    /// `(param, message)` for rows whose solve failed outright.
    pub failures: Vec<(f64, String)>,
    /// Sup-distance between the gauge-aligned final shifted `u` and the
    /// ergodic coupled solution (lambda sweeps only).
    pub ergodic_sup_distance: Option<f64>,
    /// `d_1` between the final row's measure and the ergodic one.
    pub ergodic_d1: Option<f64>,
}

/// Which shift a lambda sweep applies to the value functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum LambdaShift {
    /// `u - Lbar(tau, m_lambda) / lambda` (the discrete-system shift).
    Discrete,
    /// `u + c_hat(m_lambda) / lambda` with the extrapolated critical value.
    Continuum,
}

struct Row {
    param: f64,
    solution: MfgSolution,
    shifted_u: GridFunction,
    shift_constant: f64,
    seconds: f64,
}

fn solve_row(spec: &ProblemSpec, param: f64, shift: Option<LambdaShift>) -> Result<Row> {
    let start = std::time::Instant::now();
    let m_init = GridMeasure::uniform(spec.grid);
    let solution = solve_dmfg(spec, &m_init)?;

    let (shifted_u, shift_constant) = match shift {
        None => {
            let lbar = estimate_lbar(spec, &solution.m, LbarMethod::Ergodic)?;
            (solution.u.clone(), lbar)
        }
        Some(LambdaShift::Discrete) => {
            let lbar = estimate_lbar(spec, &solution.m, LbarMethod::Ergodic)?;
            (solution.u.shifted(-lbar / spec.lambda), lbar)
        }
        Some(LambdaShift::Continuum) => {
            let table =
                estimate_critical_value(spec, &solution.m, &[spec.tau, spec.tau / 2.0])?;
            let c_hat = extrapolate_critical_value(&table)?;
            (solution.u.shifted(c_hat / spec.lambda), c_hat)
        }
    };
    Ok(Row {
        param,
        solution,
        shifted_u,
        shift_constant,
        seconds: start.elapsed().as_secs_f64(),
    })
}

type CollectedRows = (Vec<SweepRecord>, Vec<(f64, String)>, Vec<Option<Row>>);

fn collect_table(outcomes: Vec<(f64, Result<Row>)>) -> CollectedRows {
    let mut failures = Vec::new();
    let mut rows: Vec<Option<Row>> = Vec::with_capacity(outcomes.len());
    let mut params = Vec::with_capacity(outcomes.len());
    for (param, outcome) in outcomes {
        params.push(param);
        match outcome {
            Ok(row) => rows.push(Some(row)),
            Err(err) => {
                failures.push((param, err.to_string()));
                rows.push(None);
            }
        }
    }

    let mut records = Vec::with_capacity(rows.len());
    for i in 0..rows.len() {
        let record = match &rows[i] {
            None => SweepRecord::failed(params[i], 0.0),
            Some(row) => {
                let previous = if i > 0 { rows[i - 1].as_ref() } else { None };
                let (sup_cauchy, d1_cauchy) = match previous {
                    Some(prev) => (
                        row.shifted_u
                            .sup_distance(&prev.shifted_u)
                            .unwrap_or(f64::NAN),
                        d1_distance(&row.solution.m, &prev.solution.m).unwrap_or(f64::NAN),
                    ),
                    None => (f64::NAN, f64::NAN),
                };
                let refs = reference_points(row.shifted_u.grid());
                let mut u_ref = [0.0_f64; 4];
                for (slot, &index) in u_ref.iter_mut().zip(&refs) {
                    *slot = row.shifted_u.value(index);
                }
                SweepRecord {
                    param: row.param,
                    u_sup: row.shifted_u.sup_norm(),
                    u_ref,
                    sup_cauchy,
                    d1_cauchy,
                    lbar_or_c: row.shift_constant,
                    hjb_res: row.solution.residuals.hjb_residual,
                    holo_res: row.solution.measure_report.holonomy_defect,
                    coupling_gap: row.solution.residuals.coupling_gap,
                    seconds: row.seconds,
                    converged: row.solution.converged,
                }
            }
        };
        records.push(record);
    }
    (records, failures, rows)
}

/// Vanishing-discount sweep at fixed `tau`: one coupled solve per lambda,
/// rows ordered by decreasing lambda, values shifted by `Lbar/lambda`
/// (discrete) or `c_hat/lambda` (continuum). The final row is compared
/// against the direct ergodic coupled solve.
pub fn sweep_lambda(
    template: &ProblemSpec,
    lambdas: &[f64],
    shift: LambdaShift,
) -> Result<SweepTable> {
    if lambdas.is_empty() || lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSpec(
            "lambda sweep needs a non-empty strictly decreasing list".into(),
        ));
    }
    let mut specs = Vec::with_capacity(lambdas.len());
    for &lambda in lambdas {
        let mut spec = template.clone();
        spec.lambda = lambda;
        spec.window = None;
        spec.validate()?;
        specs.push((lambda, spec));
    }

    let mut outcomes: Vec<(f64, Result<Row>)> = specs
        .par_iter()
        .map(|(lambda, spec)| (*lambda, solve_row(spec, *lambda, Some(shift))))
        .collect();
    outcomes.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite lambdas"));
    let (records, failures, rows) = collect_table(outcomes);

    // Gauge-aligned comparison with the ergodic coupled solve, using the
    // last successful row.
    let mut ergodic_sup_distance = None;
    let mut ergodic_d1 = None;
    if let Some(last) = rows.iter().rev().flatten().next() {
        let mut ergodic_spec = template.clone();
        ergodic_spec.lambda = 0.0;
        ergodic_spec.window = None;
        ergodic_spec.validate()?;
        let ergodic = solve_ergodic_mfg(&ergodic_spec, &GridMeasure::uniform(template.grid))?;
        let aligned_last = last.shifted_u.shifted(-last.shifted_u.value(0));
        let aligned_ergodic = ergodic.u.shifted(-ergodic.u.value(0));
        ergodic_sup_distance = Some(aligned_last.sup_distance(&aligned_ergodic)?);
        ergodic_d1 = Some(d1_distance(&last.solution.m, &ergodic.m)?);
    }

    Ok(SweepTable {
        records,
        failures,
        ergodic_sup_distance,
        ergodic_d1,
    })
}

/// Discretization sweep at fixed `lambda`: one coupled solve per tau with
/// its own auto-resolved window, rows ordered by decreasing tau, raw `u`
/// Cauchy distances. The last row's residual triple is the discrete
/// certificate of the limiting solution.
pub fn sweep_tau(template: &ProblemSpec, taus: &[f64]) -> Result<SweepTable> {
    if taus.is_empty() || taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidSpec(
            "tau sweep needs a non-empty strictly decreasing list".into(),
        ));
    }
    let mut specs = Vec::with_capacity(taus.len());
    for &tau in taus {
        let mut spec = template.clone();
        spec.tau = tau;
        spec.window = None;
        spec.validate()?;
        specs.push((tau, spec));
    }
    let mut outcomes: Vec<(f64, Result<Row>)> = specs
        .par_iter()
        .map(|(tau, spec)| (*tau, solve_row(spec, *tau, None)))
        .collect();
    outcomes.sort_by(|a, b| b.0.partial_cmp(&a.0).expect("finite taus"));
    let (records, failures, _) = collect_table(outcomes);
    Ok(SweepTable {
        records,
        failures,
        ergodic_sup_distance: None,
        ergodic_d1: None,
    })
}

/// Least-squares fit of `y = K * x` through the origin with its R^2.
/// A residual-free fit of constant data reports R^2 = 1 so that
/// exactly-resolved models (zero bias at every tau) pass the linearity
/// diagnostic.
pub fn fit_through_origin(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let k = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let mean_y: f64 = ys.iter().sum::<f64>() / ys.len() as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean_y).powi(2)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - k * x).powi(2))
        .sum();
    let r2 = if ss_tot <= 1e-30 {
        if ss_res <= 1e-30 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    (k, r2)
}
