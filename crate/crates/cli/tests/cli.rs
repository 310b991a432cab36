use std::path::Path;
use std::process::{Command, Output};

use icurisk_core::models::default_benchmark;
use icurisk_core::report::RunConfig;
use tempfile::TempDir;

fn icurisk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icurisk")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

/// Small synthetic run: one grid entry per benchmark row, short explanations.
fn write_config(dir: &Path, explain: bool) -> String {
    let mut cfg = RunConfig::synthetic(11);
    cfg.models = Some(
        default_benchmark()
            .into_iter()
            .map(|mut b| {
                b.grid.truncate(1);
                b
            })
            .collect(),
    );
    cfg.eval.n_boot = 100;
    cfg.explain.enabled = explain;
    cfg.explain.ablation_boot = 5;
    cfg.explain.dream.n_generations = 600;
    cfg.explain.ale_features = Some(2);
    cfg.explain.prior_sd = None;
    cfg.out = dir.join("out");
    let path = dir.join(if explain { "explain.json" } else { "run.json" });
    std::fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn a_seed_is_required() {
    let out = icurisk(&["run"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn synth_writes_a_cohort_and_schema() {
    let dir = TempDir::new().unwrap();
    let out_dir = dir.path().join("cohort");
    let out = icurisk(&["synth", "--seed", "4", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("cohort.csv")).unwrap();
    assert_eq!(text.lines().count(), 1302);
    assert!(out_dir.join("schema.json").is_file());
}

#[test]
fn malformed_config_exits_with_config_code() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.json");
    std::fs::write(&path, r#"{"seed": "not a number"}"#).unwrap();
    assert_eq!(code(&icurisk(&["run", "--config", path.to_str().unwrap()])), 2);
}

#[test]
fn bad_cohort_file_exits_with_data_code() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("cohort.csv");
    std::fs::write(&data, "age,label\n70,1\n").unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, r#"{"seed": 1, "data": {"source": "csv", "path": "cohort.csv"}}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = icurisk(&["run", "--config", path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dataset"));
}

#[test]
fn report_without_a_run_is_a_filesystem_error() {
    let dir = TempDir::new().unwrap();
    assert_eq!(code(&icurisk(&["report", "--out", dir.path().to_str().unwrap()])), 1);
}

#[test]
fn run_then_explain_then_report() {
    let dir = TempDir::new().unwrap();
    let run_cfg = write_config(dir.path(), false);
    let out = icurisk(&["run", "--config", &run_cfg, "--jobs", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let out_dir = dir.path().join("out");
    assert!(out_dir.join("metrics_test.csv").is_file());
    assert!(!out_dir.join("shap_summary.csv").exists());

    let explain_cfg = write_config(dir.path(), true);
    let out = icurisk(&["explain", "--config", &explain_cfg]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("shap_summary.svg").is_file());
    assert!(out_dir.join("posterior.csv").is_file());

    let before = std::fs::read(out_dir.join("manifest.json")).unwrap();
    let out = icurisk(&["report", "--out", out_dir.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let after: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("manifest.json")).unwrap()).unwrap();
    let before: serde_json::Value = serde_json::from_slice(&before).unwrap();
    assert_eq!(before["artifacts"], after["artifacts"]);
}
