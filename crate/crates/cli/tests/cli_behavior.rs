//! End-to-end checks of the binary: exit codes, artifact layout, and the
//! byte-level determinism contract.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_hetero-opt");

fn run_cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(cwd)
        .env("HETERO_OPT_THREADS", "2")
        .output()
        .expect("binary spawns")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn hetero_sign_config(out: &str, steps: usize) -> String {
    format!(
        r#"{{
  "experiment": "quadratic",
  "objective": {{"kind": "quadratic", "preset": "hetero", "seed": 4}},
  "optimizer": {{"rule": "sign", "schedule": {{"kind": "quad_optimal_sign", "lambda_p": 1701.3333333333333}}}},
  "steps": {steps},
  "seeds": [4],
  "output": "{out}"
}}"#
    )
}

fn stderr_text(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}

#[test]
fn rerun_with_same_seed_is_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.json", &hetero_sign_config("out", 50));

    let first = run_cli(&["run", &config], tmp.path());
    assert!(first.status.success(), "{}", stderr_text(&first));
    let csv1 = fs::read(tmp.path().join("out/trajectory.csv")).unwrap();

    let second = run_cli(&["run", &config, "--force"], tmp.path());
    assert!(second.status.success(), "{}", stderr_text(&second));
    let csv2 = fs::read(tmp.path().join("out/trajectory.csv")).unwrap();

    assert_eq!(csv1, csv2);
    assert!(!csv1.is_empty());
}

#[test]
fn hetero_summary_reports_weighted_hessian_norm() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.json", &hetero_sign_config("out", 10));

    let output = run_cli(&["run", &config], tmp.path());
    assert!(output.status.success(), "{}", stderr_text(&output));

    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    let lambda_p = summary["lambda_P"].as_f64().unwrap();
    assert!((lambda_p - 5104.0 / 3.0).abs() < 1e-4, "lambda_P = {lambda_p}");
    assert_eq!(summary["diverged"], serde_json::Value::Bool(false));

    let manifest: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("out/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([4]));
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_schedule_constant_exits_2_and_names_the_field() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "bad.json",
        r#"{
  "experiment": "quadratic",
  "objective": {"kind": "quadratic", "preset": "homo", "seed": 3},
  "optimizer": {"rule": "sign", "schedule": {"kind": "theorem_sign", "rho_h": 0.0}},
  "steps": 10,
  "seeds": [1],
  "output": "out"
}"#,
    );

    let output = run_cli(&["run", &config], tmp.path());
    assert_eq!(output.status.code(), Some(2));
    let stderr = stderr_text(&output);
    assert!(stderr.contains("Lambda_P"), "stderr: {stderr}");
    assert!(!tmp.path().join("out").exists());
}

#[test]
fn refuses_to_overwrite_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), "run.json", &hetero_sign_config("out", 5));

    let first = run_cli(&["run", &config], tmp.path());
    assert!(first.status.success(), "{}", stderr_text(&first));

    let second = run_cli(&["run", &config], tmp.path());
    assert_eq!(second.status.code(), Some(1));
    assert!(stderr_text(&second).contains("--force"));

    let third = run_cli(&["run", &config, "--force"], tmp.path());
    assert!(third.status.success(), "{}", stderr_text(&third));
}

#[test]
fn compare_overlays_runs_and_flags_objective_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let hetero = write_config(tmp.path(), "hetero.json", &hetero_sign_config("hetero-run", 20));
    let homo = write_config(
        tmp.path(),
        "homo.json",
        r#"{
  "experiment": "quadratic",
  "objective": {"kind": "quadratic", "preset": "homo", "seed": 3},
  "optimizer": {"rule": "sign", "schedule": {"kind": "quad_optimal_sign", "lambda_p": 4999.0}},
  "steps": 30,
  "seeds": [3],
  "output": "homo-run"
}"#,
    );

    for config in [&hetero, &homo] {
        let output = run_cli(&["run", config], tmp.path());
        assert!(output.status.success(), "{}", stderr_text(&output));
    }

    let output = run_cli(&["compare", "hetero-run", "homo-run"], tmp.path());
    assert!(output.status.success(), "{}", stderr_text(&output));
    let text = fs::read_to_string(tmp.path().join("comparison.csv")).unwrap();
    let mut lines = text.lines();
    let first = lines.next().unwrap();
    assert!(first.starts_with("# objective mismatch:"), "{first}");
    assert_eq!(lines.next().unwrap(), "step,hetero-run_grad_l2,homo-run_grad_l2");
    // min-truncate: 20-step run bounds the row count (plus the final point)
    assert_eq!(lines.count(), 21);

    // single directory: plain passthrough, no mismatch comment
    let single = run_cli(&["compare", "hetero-run", "--out", "single.csv"], tmp.path());
    assert!(single.status.success(), "{}", stderr_text(&single));
    let text = fs::read_to_string(tmp.path().join("single.csv")).unwrap();
    assert!(text.starts_with("step,hetero-run_grad_l2\n"));
}

#[test]
fn multi_seed_complexity_writes_seed_dirs_and_ensemble() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "complexity.json",
        r#"{
  "experiment": "complexity",
  "objective": {"kind": "quadratic", "preset": "hetero", "seed": 4},
  "optimizer": {"rule": "sign", "schedule": {"kind": "quad_optimal_sign", "lambda_p": 1701.3333333333333}},
  "steps": 60,
  "seeds": [1, 2, 3],
  "epsilons": [10.0, 100.0],
  "q": 1,
  "output": "out"
}"#,
    );

    let output = run_cli(&["run", &config], tmp.path());
    assert!(output.status.success(), "{}", stderr_text(&output));

    for seed in [1, 2, 3] {
        let dir = tmp.path().join(format!("out/seed-{seed}"));
        assert!(dir.join("summary.json").exists());
        assert!(dir.join("trajectory.csv").exists());
    }
    let ensemble: serde_json::Value =
        serde_json::from_slice(&fs::read(tmp.path().join("out/summary.json")).unwrap()).unwrap();
    let rows = ensemble["T_eps"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["mode"], "stochastic:3");
}

#[test]
fn unknown_config_field_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(
        tmp.path(),
        "typo.json",
        r#"{
  "experiment": "quadratic",
  "objective": {"kind": "quadratic", "preset": "homo", "seed": 3},
  "optimizer": {"rule": "sign", "schedule": {"kind": "quad_optimal_sign", "lambda_p": 4999.0}},
  "stepz": 10,
  "seeds": [1]
}"#,
    );

    let output = run_cli(&["run", &config], tmp.path());
    assert_eq!(output.status.code(), Some(2));
    assert!(stderr_text(&output).contains("stepz"));
}
