//! End-to-end CLI behavior: exit codes, error messages, output layout.

use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dmfg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, value: &serde_json::Value) -> String {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_vec_pretty(value).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn base_config() -> serde_json::Value {
    serde_json::json!({
        "schema": 1,
        "model": {
            "lagrangian": "quadratic",
            "g": {"kind": "sin2pi"},
            "coupling": {"kind": "additive", "f": 0.0}
        },
        "grid": {"dim": 1, "n": 64},
        "tau": 0.1,
        "lambda": 0.5
    })
}

#[test]
fn hjb_solves_and_reports_the_reference_value() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "config.json", &base_config());
    let out = dir.path().join("out");
    let result = run(&["hjb", "--config", &config, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(result.status.code(), Some(0));

    let u_csv = std::fs::read_to_string(out.join("u.csv")).unwrap();
    let first_value: f64 = u_csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(first_value.abs() < 0.02, "u(0) = {first_value}");
    assert!(out.join("report.json").exists());
    assert!(out.join("config_echo.json").exists());
    // The echo is byte-identical to the input.
    assert_eq!(
        std::fs::read(out.join("config_echo.json")).unwrap(),
        std::fs::read(&config).unwrap()
    );
}

#[test]
fn malformed_json_exits_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, b"{\n  \"schema\": 1,\n").unwrap();
    let out = dir.path().join("out");
    let result = run(&["hjb", "--config", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("line"), "stderr: {stderr}");
    assert!(stderr.contains("column"), "stderr: {stderr}");
}

#[test]
fn constraint_violation_exits_one_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["tau"] = serde_json::json!(0.9);
    config["lambda"] = serde_json::json!(1.2);
    let path = write_config(dir.path(), "bad.json", &config);
    let out = dir.path().join("out");
    let result = run(&["hjb", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("tau*lambda"), "stderr: {stderr}");
}

#[test]
fn unknown_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["surprise"] = serde_json::json!(true);
    let path = write_config(dir.path(), "unknown.json", &config);
    let out = dir.path().join("out");
    let result = run(&["hjb", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn exhausted_iteration_budget_exits_two_with_history() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["tolerances"] = serde_json::json!({"max_value_iters": 1});
    let path = write_config(dir.path(), "tight.json", &config);
    let out = dir.path().join("out");
    let result = run(&["hjb", "--config", &path, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(result.status.code(), Some(2));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["residual_history"].as_array().unwrap().len(), 1);
}

#[test]
fn nonuniq_on_double_well_exits_zero_with_separation() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["model"]["g"] = serde_json::json!({"kind": "twowell"});
    let path = write_config(dir.path(), "twowell.json", &config);
    let out = dir.path().join("out");
    let result = run(&["nonuniq", "--config", &path, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(result.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let separation = report["separation"].as_f64().unwrap();
    assert!((separation - 0.5).abs() <= 2.0 / 64.0, "separation {separation}");
    assert!(report["meets_criterion"].as_bool().unwrap());
    for file in ["u_a.csv", "m_a.csv", "u_b.csv", "m_b.csv"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
}

#[test]
fn nonuniq_on_single_well_exits_three_but_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let config = base_config(); // single well at 0
    let path = write_config(dir.path(), "single.json", &config);
    let out = dir.path().join("out");
    let result = run(&["nonuniq", "--config", &path, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(result.status.code(), Some(3));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(!report["meets_criterion"].as_bool().unwrap());
    assert!(report["separation"].as_f64().unwrap() <= 2.0 / 64.0);
}

#[test]
fn sweep_tolerates_divergent_rows_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config();
    // f > 0 keeps value iteration geometric; the tiny lambda cannot finish.
    config["model"]["coupling"] = serde_json::json!({"kind": "additive", "f": 1.0});
    config["grid"] = serde_json::json!({"dim": 1, "n": 16});
    config["tolerances"] = serde_json::json!({"max_value_iters": 2000});
    config["sweep"] = serde_json::json!({"lambdas": [0.5, 0.01]});
    let path = write_config(dir.path(), "sweep.json", &config);
    let out = dir.path().join("out");
    let result = run(&[
        "sweep-lambda",
        "--config",
        &path,
        "--out",
        out.to_str().unwrap(),
        "--quiet",
    ]);
    assert_eq!(result.status.code(), Some(0));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["failures"].as_array().unwrap().len(), 1);
    let csv = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3); // header + both rows, one flagged
    assert!(csv.lines().nth(2).unwrap().contains("NaN"));
}

#[test]
fn thread_count_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["grid"] = serde_json::json!({"dim": 1, "n": 32});
    config["sweep"] = serde_json::json!({"lambdas": [0.5, 0.25]});
    let path = write_config(dir.path(), "threads.json", &config);
    let mut csvs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(format!("out-{threads}"));
        let result = run(&[
            "sweep-lambda",
            "--config",
            &path,
            "--out",
            out.to_str().unwrap(),
            "--threads",
            threads,
            "--quiet",
        ]);
        assert_eq!(result.status.code(), Some(0));
        csvs.push(std::fs::read(out.join("sweep.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1], "sweep.csv depends on the thread count");
}

#[test]
fn sweep_without_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_config(dir.path(), "nosweep.json", &base_config());
    let out = dir.path().join("out");
    let result = run(&["sweep-tau", "--config", &path, "--out", out.to_str().unwrap()]);
    assert_eq!(result.status.code(), Some(1));
}

#[test]
fn dmfg_writes_the_full_solution_layout() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = base_config();
    config["grid"] = serde_json::json!({"dim": 1, "n": 32});
    let path = write_config(dir.path(), "dmfg.json", &config);
    let out = dir.path().join("out");
    let result = run(&["dmfg", "--config", &path, "--out", out.to_str().unwrap(), "--quiet"]);
    assert_eq!(result.status.code(), Some(0));
    for file in ["u.csv", "m.csv", "mu.json", "report.json", "config_echo.json"] {
        assert!(out.join(file).exists(), "{file} missing");
    }
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    assert!(report["converged"].as_bool().unwrap());
    assert!(report["residuals"]["coupling_gap"].as_f64().unwrap() <= 1e-5);
    // The mass concentrates at the well; m.csv's first data row carries it.
    let m_csv = std::fs::read_to_string(out.join("m.csv")).unwrap();
    let w0: f64 = m_csv
        .lines()
        .nth(1)
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap();
    assert!(w0 > 0.9, "weight at the well is {w0}");
}
