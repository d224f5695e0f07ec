//! End-to-end checks of the binary: exit codes, golden bytes, determinism.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_offrl"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

#[test]
fn verify_passes_on_shipped_fixtures() {
    let out = run(&["verify"]);
    assert!(
        out.status.success(),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("all checks passed"));
    assert!(!text.contains("FAIL"));
}

#[test]
fn diagnose_flags_corrupted_empirical_model_with_exit_2() {
    let mdp = fixtures().join("golden_uniform_mdp.json");
    let emp = fixtures().join("corrupted_emp.json");
    let out = run(&[
        "diagnose",
        "--mdp",
        mdp.to_str().unwrap(),
        "--emp",
        emp.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(
        text.contains("empirical-model-validation"),
        "must name the failed check: {text}"
    );
}

#[test]
fn diagnose_passes_on_sampled_dataset() {
    let mdp = fixtures().join("golden_uniform_mdp.json");
    let data = fixtures().join("golden_dataset.jsonl");
    let out = run(&[
        "diagnose",
        "--mdp",
        mdp.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("all checks passed"));
    // One JSON report line per checker.
    assert!(text.contains("variance-recursion-evaluation"));
    assert!(text.contains("mis-variance-bound"));
}

#[test]
fn sweep_reproduces_golden_csv_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let config = fixtures().join("ope_scaling.cfg");
    let out = run(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let produced = std::fs::read(dir.path().join("rows.csv")).unwrap();
    let golden = std::fs::read(fixtures().join("golden_rows.csv")).unwrap();
    assert_eq!(produced, golden, "sweep output must be byte-stable");
}

#[test]
fn sweep_output_is_independent_of_thread_count() {
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let config = fixtures().join("ope_scaling.cfg");
    for (dir, threads) in [(&dir1, "1"), (&dir2, "2")] {
        let out = run(&[
            "sweep",
            "--config",
            config.to_str().unwrap(),
            "--out-dir",
            dir.path().to_str().unwrap(),
            "--threads",
            threads,
        ]);
        assert!(out.status.success());
    }
    let a = std::fs::read(dir1.path().join("rows.csv")).unwrap();
    let b = std::fs::read(dir2.path().join("rows.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn generate_sample_ope_opo_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let mdp = dir.path().join("mdp.json");
    let data = dir.path().join("data.jsonl");
    let planned = dir.path().join("planned.json");

    let out = run(&[
        "generate",
        "--kind",
        "terminal",
        "--states",
        "4",
        "--horizon",
        "5",
        "--seed",
        "9",
        "--out",
        mdp.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let out = run(&[
        "sample",
        "--mdp",
        mdp.to_str().unwrap(),
        "--episodes",
        "400",
        "--seed",
        "2",
        "--out",
        data.to_str().unwrap(),
    ]);
    assert!(out.status.success());

    let out = run(&[
        "ope",
        "--mdp",
        mdp.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--policy",
        "uniform",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("ope emits JSON");
    assert!(report["abs_error"].as_f64().unwrap() < 0.2);

    let out = run(&[
        "opo",
        "--mdp",
        mdp.to_str().unwrap(),
        "--dataset",
        data.to_str().unwrap(),
        "--out-policy",
        planned.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report["gap_on_truth"].as_f64().unwrap() >= -1e-10);
    assert!(planned.exists());
}

#[test]
fn lower_bound_reports_floor_at_half() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&[
        "lower-bound",
        "--horizon",
        "8",
        "--n-grid",
        "64,256",
        "--reps",
        "20",
        "--seed",
        "5",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for cell in report["cells"].as_array().unwrap() {
        let floor = cell["le_cam_floor"].as_f64().unwrap();
        assert!((floor - 0.5).abs() < 1e-12);
    }
    assert!(dir.path().join("lower_bound.csv").exists());
    assert!(dir.path().join("lower_bound.json").exists());
}

#[test]
fn missing_config_is_a_usage_error_not_a_check_failure() {
    let out = run(&["sweep", "--config", "/nonexistent.cfg", "--out-dir", "/tmp/x"]);
    assert_eq!(out.status.code(), Some(1));
}
