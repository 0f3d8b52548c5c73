//! CLI entry points. Each command loads and validates a config, echoes it
//! into the output directory, runs its computation and emits CSV/JSON
//! outputs. Exit codes: 0 ok, 1 config error, 2 solver non-convergence,
//! 3 criterion not met.

use std::path::Path;

use serde_json::json;

use crate::config::{RunConfig, ShiftKind};
use crate::error::Error;
use crate::io;
use crate::lax_oleinik::{solve_discounted, solve_ergodic};
use crate::limits::{sweep_lambda, sweep_tau, LambdaShift, SweepTable};
use crate::mfg::{demonstrate_nonuniqueness, solve_dmfg, solve_ergodic_mfg, MfgSolution};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_NONCONVERGENCE: i32 = 2;
pub const EXIT_CRITERION: i32 = 3;

fn version_string() -> String {
    format!("{}-v{}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"))
}

fn eprint_unless(quiet: bool, message: &str) {
    if !quiet {
        eprintln!("{message}");
    }
}

/// Loads the config and copies its raw bytes into `out_dir`.
fn prepare(config_path: &Path, out_dir: &Path) -> Result<(RunConfig, serde_json::Value), (i32, String)> {
    let (config, raw) = RunConfig::load(config_path).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    std::fs::create_dir_all(out_dir)
        .map_err(|e| (EXIT_CONFIG, format!("cannot create {}: {e}", out_dir.display())))?;
    io::write_config_echo(out_dir, &raw).map_err(|e| (EXIT_CONFIG, e.to_string()))?;
    let echo: serde_json::Value =
        serde_json::from_slice(&raw).expect("config parsed once already");
    Ok((config, echo))
}

fn non_convergence_report(out_dir: &Path, echo: &serde_json::Value, err: &Error) -> i32 {
    let payload = match err {
        Error::NonConvergence {
            iterations,
            last_residual,
            residual_history,
        } => json!({
            "version": version_string(),
            "config": echo,
            "error": err.to_string(),
            "iterations": iterations,
            "last_residual": last_residual,
            "residual_history": residual_history,
        }),
        Error::OuterNonConvergence {
            iterations,
            d1_history,
        } => json!({
            "version": version_string(),
            "config": echo,
            "error": err.to_string(),
            "iterations": iterations,
            "d1_history": d1_history,
        }),
        _ => json!({
            "version": version_string(),
            "config": echo,
            "error": err.to_string(),
        }),
    };
    let _ = io::write_json(&out_dir.join("report.json"), &payload);
    EXIT_NONCONVERGENCE
}

/// Solves the Hamilton-Jacobi fixed point for the configured frozen
/// measure and writes `u.csv` and `report.json`.
pub fn cmd_hjb(config_path: &Path, out_dir: &Path, quiet: bool) -> i32 {
    let (config, echo) = match prepare(config_path, out_dir) {
        Ok(v) => v,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return code;
        }
    };
    let run = || -> crate::error::Result<i32> {
        let spec = config.to_problem_spec()?;
        let m = config.m_init_measure()?;
        let result = if spec.is_ergodic() {
            solve_ergodic(&spec, &m)
        } else {
            solve_discounted(&spec, &m)
        };
        match result {
            Ok((u, report)) => {
                io::write_grid_function_csv(&out_dir.join("u.csv"), &u)?;
                io::write_json(
                    &out_dir.join("report.json"),
                    &json!({
                        "version": version_string(),
                        "config": echo,
                        "report": report,
                    }),
                )?;
                eprint_unless(
                    quiet,
                    &format!(
                        "converged in {} sweeps, residual {:.3e}",
                        report.iterations, report.final_residual
                    ),
                );
                Ok(EXIT_OK)
            }
            Err(err @ Error::NonConvergence { .. }) => {
                eprint_unless(quiet, &err.to_string());
                Ok(non_convergence_report(out_dir, &echo, &err))
            }
            Err(other) => Err(other),
        }
    };
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            EXIT_CONFIG
        }
    }
}

fn write_solution_outputs(
    out_dir: &Path,
    echo: &serde_json::Value,
    solution: &MfgSolution,
) -> crate::error::Result<()> {
    io::write_grid_function_csv(&out_dir.join("u.csv"), &solution.u)?;
    io::write_grid_measure_csv(&out_dir.join("m.csv"), &solution.m)?;
    io::write_phase_measure_json(&out_dir.join("mu.json"), &solution.mu)?;
    io::write_json(
        &out_dir.join("report.json"),
        &json!({
            "version": version_string(),
            "config": echo,
            "converged": solution.converged,
            "outer_iterations": solution.outer_iterations,
            "d1_history": solution.d1_history,
            "residuals": solution.residuals,
            "value_defect": solution.measure_report.value_defect,
            "holonomy_defect": solution.measure_report.holonomy_defect,
            "burn_in": solution.measure_report.burn_in,
            "orbit_length": solution.measure_report.orbit_length,
            "solve_report": solution.solve_report,
        }),
    )
}

/// Runs the coupled solve and writes `u.csv`, `m.csv`, `mu.json`,
/// `report.json`.
pub fn cmd_dmfg(config_path: &Path, out_dir: &Path, quiet: bool) -> i32 {
    let (config, echo) = match prepare(config_path, out_dir) {
        Ok(v) => v,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return code;
        }
    };
    let run = || -> crate::error::Result<i32> {
        let spec = config.to_problem_spec()?;
        let m_init = config.m_init_measure()?;
        let result = if spec.is_ergodic() {
            solve_ergodic_mfg(&spec, &m_init)
        } else {
            solve_dmfg(&spec, &m_init)
        };
        match result {
            Ok(solution) => {
                write_solution_outputs(out_dir, &echo, &solution)?;
                eprint_unless(
                    quiet,
                    &format!(
                        "coupled solve: converged={} after {} outer iterations, gap {:.3e}",
                        solution.converged,
                        solution.outer_iterations,
                        solution.residuals.coupling_gap
                    ),
                );
                Ok(if solution.converged {
                    EXIT_OK
                } else {
                    EXIT_NONCONVERGENCE
                })
            }
            Err(err @ (Error::NonConvergence { .. } | Error::OuterNonConvergence { .. })) => {
                eprint_unless(quiet, &err.to_string());
                Ok(non_convergence_report(out_dir, &echo, &err))
            }
            Err(other) => Err(other),
        }
    };
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            EXIT_CONFIG
        }
    }
}

fn write_sweep_outputs(
    out_dir: &Path,
    echo: &serde_json::Value,
    table: &SweepTable,
) -> crate::error::Result<()> {
    io::write_sweep_csv(&out_dir.join("sweep.csv"), table)?;
    io::write_json(
        &out_dir.join("report.json"),
        &json!({
            "version": version_string(),
            "config": echo,
            "records": table.records,
            "failures": table.failures,
            "ergodic_sup_distance": table.ergodic_sup_distance,
            "ergodic_d1": table.ergodic_d1,
        }),
    )
}

/// Vanishing-discount sweep; rows tolerate failures, so the exit code is 0
/// whenever the sweep itself ran.
pub fn cmd_sweep_lambda(config_path: &Path, out_dir: &Path, quiet: bool) -> i32 {
    let (config, echo) = match prepare(config_path, out_dir) {
        Ok(v) => v,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return code;
        }
    };
    let run = || -> crate::error::Result<i32> {
        let spec = config.to_problem_spec()?;
        let sweep = config
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("sweep-lambda needs a sweep.lambdas list".into()))?;
        if sweep.lambdas.is_empty() {
            return Err(Error::Config("sweep-lambda needs a sweep.lambdas list".into()));
        }
        let shift = match sweep.shift {
            ShiftKind::Discrete => LambdaShift::Discrete,
            ShiftKind::Continuum => LambdaShift::Continuum,
        };
        let table = sweep_lambda(&spec, &sweep.lambdas, shift)?;
        write_sweep_outputs(out_dir, &echo, &table)?;
        eprint_unless(
            quiet,
            &format!(
                "lambda sweep: {} rows, {} failed",
                table.records.len(),
                table.failures.len()
            ),
        );
        Ok(EXIT_OK)
    };
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            EXIT_CONFIG
        }
    }
}

/// Discretization sweep at fixed lambda.
pub fn cmd_sweep_tau(config_path: &Path, out_dir: &Path, quiet: bool) -> i32 {
    let (config, echo) = match prepare(config_path, out_dir) {
        Ok(v) => v,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return code;
        }
    };
    let run = || -> crate::error::Result<i32> {
        let spec = config.to_problem_spec()?;
        let sweep = config
            .sweep
            .as_ref()
            .ok_or_else(|| Error::Config("sweep-tau needs a sweep.taus list".into()))?;
        if sweep.taus.is_empty() {
            return Err(Error::Config("sweep-tau needs a sweep.taus list".into()));
        }
        let table = sweep_tau(&spec, &sweep.taus)?;
        write_sweep_outputs(out_dir, &echo, &table)?;
        eprint_unless(
            quiet,
            &format!(
                "tau sweep: {} rows, {} failed",
                table.records.len(),
                table.failures.len()
            ),
        );
        Ok(EXIT_OK)
    };
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            EXIT_CONFIG
        }
    }
}

/// Two-branch non-uniqueness demonstration. Exit 0 only when both branches
/// converge and the separation criterion holds; 3 when the branches
/// collapse together (report still written).
pub fn cmd_nonuniq(config_path: &Path, out_dir: &Path, quiet: bool) -> i32 {
    let (config, echo) = match prepare(config_path, out_dir) {
        Ok(v) => v,
        Err((code, msg)) => {
            eprintln!("{msg}");
            return code;
        }
    };
    let run = || -> crate::error::Result<i32> {
        let spec = config.to_problem_spec()?;
        let dim = spec.grid.dim();
        let (seed_a, seed_b) = match &config.nonuniq {
            Some(nu) => (nu.seed_a.clone(), nu.seed_b.clone()),
            None => (vec![0.0; dim], vec![0.5; dim]),
        };
        match demonstrate_nonuniqueness(&spec, &seed_a, &seed_b) {
            Ok(demo) => {
                io::write_grid_function_csv(&out_dir.join("u_a.csv"), &demo.solution_a.u)?;
                io::write_grid_measure_csv(&out_dir.join("m_a.csv"), &demo.solution_a.m)?;
                io::write_grid_function_csv(&out_dir.join("u_b.csv"), &demo.solution_b.u)?;
                io::write_grid_measure_csv(&out_dir.join("m_b.csv"), &demo.solution_b.m)?;
                io::write_json(
                    &out_dir.join("report.json"),
                    &json!({
                        "version": version_string(),
                        "config": echo,
                        "separation": demo.separation,
                        "threshold": demo.threshold,
                        "meets_criterion": demo.meets_criterion,
                        "residuals_a": demo.solution_a.residuals,
                        "residuals_b": demo.solution_b.residuals,
                        "outer_iterations_a": demo.solution_a.outer_iterations,
                        "outer_iterations_b": demo.solution_b.outer_iterations,
                    }),
                )?;
                eprint_unless(
                    quiet,
                    &format!(
                        "separation {:.4} (threshold {:.4})",
                        demo.separation, demo.threshold
                    ),
                );
                Ok(if demo.meets_criterion {
                    EXIT_OK
                } else {
                    EXIT_CRITERION
                })
            }
            Err(err @ (Error::NonConvergence { .. } | Error::OuterNonConvergence { .. })) => {
                eprint_unless(quiet, &err.to_string());
                Ok(non_convergence_report(out_dir, &echo, &err))
            }
            Err(other) => Err(other),
        }
    };
    match run() {
        Ok(code) => code,
        Err(err) => {
            eprintln!("{err}");
            EXIT_CONFIG
        }
    }
}
