//! Deterministic CSV and JSON emission. CSV uses '.' decimals, LF line
//! endings and 17-significant-digit floats so that identical runs produce
//! byte-identical files.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;
use serde_json::json;

use crate::error::Result;
use crate::grid::GridFunction;
use crate::holonomic::AubryApproximation;
use crate::limits::SweepTable;
use crate::measures::{GridMeasure, PhaseMeasure};

/// 17 significant digits, scientific notation; NaN prints as "NaN".
pub fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn coordinate_header(dim: usize, value_name: &str) -> String {
    match dim {
        1 => format!("x,{value_name}"),
        _ => format!("x0,x1,{value_name}"),
    }
}

fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut file = fs::File::create(path)?;
    file.write_all(contents)?;
    Ok(())
}

pub fn write_grid_function_csv(path: &Path, u: &GridFunction) -> Result<()> {
    let grid = u.grid();
    let mut out = String::new();
    out.push_str(&coordinate_header(grid.dim(), "u"));
    out.push('\n');
    for i in 0..grid.len() {
        for c in grid.point(i) {
            out.push_str(&fmt_float(c));
            out.push(',');
        }
        out.push_str(&fmt_float(u.value(i)));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn grid_function_json(u: &GridFunction) -> serde_json::Value {
    json!({
        "dim": u.grid().dim(),
        "n": u.grid().n_per_axis(),
        "values": u.values(),
    })
}

pub fn write_grid_measure_csv(path: &Path, m: &GridMeasure) -> Result<()> {
    let grid = m.grid();
    let mut out = String::new();
    out.push_str(&coordinate_header(grid.dim(), "weight"));
    out.push('\n');
    for i in 0..grid.len() {
        for c in grid.point(i) {
            out.push_str(&fmt_float(c));
            out.push(',');
        }
        out.push_str(&fmt_float(m.weight(i)));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn grid_measure_json(m: &GridMeasure) -> serde_json::Value {
    json!({
        "dim": m.grid().dim(),
        "n": m.grid().n_per_axis(),
        "weights": m.weights(),
    })
}

/// Dense phase-measure weights in point-major, velocity-minor order over
/// the admissible window offsets.
pub fn phase_measure_json(mu: &PhaseMeasure) -> serde_json::Value {
    let grid = mu.grid();
    let window = mu.window();
    let offsets = window.offsets(grid);
    let mut weights = Vec::with_capacity(grid.len() * offsets.len());
    for point in 0..grid.len() {
        for offset in &offsets {
            let w = mu
                .atoms()
                .get(&(point, offset.clone()))
                .copied()
                .unwrap_or(0.0);
            weights.push(w);
        }
    }
    json!({
        "dim": grid.dim(),
        "n": grid.n_per_axis(),
        "tau": window.tau,
        "radius_steps": window.radius_steps,
        "weights": weights,
    })
}

pub fn write_phase_measure_json(path: &Path, mu: &PhaseMeasure) -> Result<()> {
    write_json(path, &phase_measure_json(mu))
}

/// Sparse atom table of a phase measure: coordinates, velocities, weight.
pub fn write_phase_measure_csv(path: &Path, mu: &PhaseMeasure) -> Result<()> {
    let grid = mu.grid();
    let window = mu.window();
    let mut out = String::new();
    match grid.dim() {
        1 => out.push_str("x,v,weight\n"),
        _ => out.push_str("x0,x1,v0,v1,weight\n"),
    }
    for ((index, offsets), w) in mu.atoms() {
        for c in grid.point(*index) {
            out.push_str(&fmt_float(c));
            out.push(',');
        }
        for v in window.velocity_of(grid, offsets) {
            out.push_str(&fmt_float(v));
            out.push(',');
        }
        out.push_str(&fmt_float(*w));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Atom table of an Aubry-set approximation: coordinates, velocities,
/// visit frequency.
pub fn write_aubry_csv(
    path: &Path,
    aubry: &AubryApproximation,
    grid: &crate::grid::TorusGrid,
) -> Result<()> {
    let mut out = String::new();
    match grid.dim() {
        1 => out.push_str("x,v,frequency\n"),
        _ => out.push_str("x0,x1,v0,v1,frequency\n"),
    }
    for ((index, offsets), freq) in aubry.atoms() {
        for c in grid.point(*index) {
            out.push_str(&fmt_float(c));
            out.push(',');
        }
        for v in aubry.window().velocity_of(grid, offsets) {
            out.push_str(&fmt_float(v));
            out.push(',');
        }
        out.push_str(&fmt_float(*freq));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

/// Sweep table in row order. Wall-clock seconds stay out of the CSV (they
/// live in the JSON sidecar) to keep reruns byte-identical.
pub fn write_sweep_csv(path: &Path, table: &SweepTable) -> Result<()> {
    let mut out = String::new();
    out.push_str(
        "param,u_ref0,u_ref1,u_ref2,u_ref3,sup_cauchy,d1_cauchy,lbar_or_c,hjb_res,holo_res,coupling_gap\n",
    );
    for rec in &table.records {
        let fields = [
            rec.param,
            rec.u_ref[0],
            rec.u_ref[1],
            rec.u_ref[2],
            rec.u_ref[3],
            rec.sup_cauchy,
            rec.d1_cauchy,
            rec.lbar_or_c,
            rec.hjb_res,
            rec.holo_res,
            rec.coupling_gap,
        ];
        let line: Vec<String> = fields.iter().map(|v| fmt_float(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    write_atomic(path, out.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Copies the raw config bytes into the output directory so every run can
/// be reproduced from its outputs alone.
pub fn write_config_echo(out_dir: &Path, raw_config: &[u8]) -> Result<()> {
    write_atomic(&out_dir.join("config_echo.json"), raw_config)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use crate::measures::VelocityWindow;
    use std::collections::BTreeMap;

    #[test]
    fn float_format_is_fixed_width_scientific() {
        assert_eq!(fmt_float(0.125), "1.2500000000000000e-1");
        assert_eq!(fmt_float(f64::NAN), "NaN");
        assert_eq!(fmt_float(-2.0), "-2.0000000000000000e0");
    }

    #[test]
    fn grid_function_csv_round_trip_layout() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TorusGrid::new(1, 4).unwrap();
        let u = GridFunction::new(grid, vec![0.0, 0.25, -1.0, 3.5]).unwrap();
        let path = dir.path().join("u.csv");
        write_grid_function_csv(&path, &u).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,u");
        assert_eq!(lines.len(), 5);
        assert!(lines[1].starts_with("0.0000000000000000e0,"));
        assert!(!text.contains('\r'));
    }

    #[test]
    fn phase_measure_csv_lists_atoms_with_velocities() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TorusGrid::new(1, 8).unwrap();
        let w = VelocityWindow::new(2, 0.25).unwrap();
        let mut atoms = BTreeMap::new();
        atoms.insert((2usize, vec![1_i64]), 0.5);
        atoms.insert((4usize, vec![0_i64]), 0.5);
        let mu = PhaseMeasure::new(grid, w, atoms).unwrap();
        let path = dir.path().join("mu.csv");
        write_phase_measure_csv(&path, &mu).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x,v,weight");
        assert_eq!(lines.len(), 3);
        // Velocity of offset +1 is h/tau = 0.5.
        assert!(lines[1].contains("5.0000000000000000e-1"));
    }

    #[test]
    fn aubry_csv_lists_frequencies() {
        let dir = tempfile::tempdir().unwrap();
        let grid = TorusGrid::new(1, 16).unwrap();
        let (lag, coup) = crate::models::additive_quadratic_model(
            0.0,
            crate::models::potential_sin_sq(),
            1.0,
        );
        let spec =
            crate::problem::ProblemSpec::new(lag, coup, grid, 0.2, 0.5).unwrap();
        let m = GridMeasure::uniform(grid);
        let (u, report) = crate::lax_oleinik::solve_discounted(&spec, &m).unwrap();
        let eff = crate::models::EffectiveLagrangian::new(
            spec.lagrangian.clone(),
            spec.coupling.clone(),
            m,
            grid,
        )
        .unwrap();
        let window = VelocityWindow::new(report.window_radius, 0.2).unwrap();
        let aubry = crate::holonomic::approximate_aubry(
            &u,
            &eff,
            &window,
            crate::lax_oleinik::DiscountMode::Discounted { lambda: 0.5 },
            &[0, 4, 8],
            400,
            100,
            1e-9,
        )
        .unwrap();
        let path = dir.path().join("aubry.csv");
        write_aubry_csv(&path, &aubry, &grid).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("x,v,frequency\n"));
        // The single-well Aubry approximation is one rest atom.
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn phase_measure_json_is_dense_point_major() {
        let grid = TorusGrid::new(1, 4).unwrap();
        let w = VelocityWindow::new(1, 0.25).unwrap();
        let mut atoms = BTreeMap::new();
        atoms.insert((2usize, vec![1_i64]), 1.0);
        let mu = PhaseMeasure::new(grid, w, atoms).unwrap();
        let v = phase_measure_json(&mu);
        let weights = v["weights"].as_array().unwrap();
        // 4 points x 3 offsets; the atom sits at point 2, offset +1 (last
        // slot of its point block).
        assert_eq!(weights.len(), 12);
        assert_eq!(weights[2 * 3 + 2].as_f64().unwrap(), 1.0);
        assert_eq!(v["radius_steps"].as_u64().unwrap(), 1);
    }
}
