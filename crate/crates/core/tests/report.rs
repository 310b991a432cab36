use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use icurisk_core::dataset::{save_cohort, Schema};
use icurisk_core::models::default_benchmark;
use icurisk_core::report::{
    load_report, rebuild_report, run_explain, run_pipeline, DataSource, RunConfig, RunManifest, MANIFEST_FILE,
};
use icurisk_core::Error;
use sha2::{Digest, Sha256};
use tempfile::TempDir;

const BENCHMARK_ORDER: [&str; 6] =
    ["gbdt_ordered", "gbdt_subsample", "gbdt_exact", "logistic_regression", "naive_bayes", "neural_network"];

/// Default benchmark rows with one grid entry each and short explain settings.
fn quick_config(seed: u64, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::synthetic(seed);
    cfg.out = out.to_path_buf();
    cfg.models = Some(
        default_benchmark()
            .into_iter()
            .map(|mut b| {
                b.grid.truncate(1);
                b
            })
            .collect(),
    );
    cfg.eval.n_boot = 200;
    cfg.explain.ablation_boot = 10;
    cfg.explain.dream.n_generations = 1000;
    cfg.explain.ale_features = Some(3);
    cfg
}

fn shared_run() -> &'static (TempDir, RunManifest) {
    static RUN: OnceLock<(TempDir, RunManifest)> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let manifest = run_pipeline(&quick_config(7, dir.path())).unwrap();
        (dir, manifest)
    })
}

fn checksums(m: &RunManifest) -> Vec<(String, String)> {
    m.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect()
}

fn copy_dir(from: &Path) -> TempDir {
    let to = TempDir::new().unwrap();
    for entry in std::fs::read_dir(from).unwrap() {
        let p = entry.unwrap().path();
        std::fs::copy(&p, to.path().join(p.file_name().unwrap())).unwrap();
    }
    to
}

#[test]
fn metrics_have_six_rows_in_benchmark_order() {
    let (dir, _) = shared_run();
    for file in ["metrics_test.csv", "metrics_train.csv"] {
        let mut r = csv::Reader::from_path(dir.path().join(file)).unwrap();
        let names: Vec<String> = r.records().map(|rec| rec.unwrap()[0].to_string()).collect();
        assert_eq!(names, BENCHMARK_ORDER);
    }
}

#[test]
fn report_json_matches_the_shipped_schema() {
    let (dir, _) = shared_run();
    let schema_path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../docs/report.schema.json");
    let schema: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(schema_path).unwrap()).unwrap();
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let errors: Vec<String> = validator.iter_errors(&report).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{errors:?}");
}

#[test]
fn every_svg_is_well_formed_xml() {
    let (dir, manifest) = shared_run();
    let svgs: Vec<&str> = manifest.artifacts.iter().map(|a| a.path.as_str()).filter(|p| p.ends_with(".svg")).collect();
    // roc, ablation, shap, posterior x2, three ALE curves
    assert_eq!(svgs.len(), 8, "{svgs:?}");
    for name in svgs {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
}

#[test]
fn csv_metrics_equal_report_json_bit_for_bit() {
    let (dir, _) = shared_run();
    let report = load_report(dir.path()).unwrap();
    let mut r = csv::Reader::from_path(dir.path().join("metrics_test.csv")).unwrap();
    let header = r.headers().unwrap().clone();
    for (rec, model) in r.records().zip(&report.models) {
        let rec = rec.unwrap();
        let field = |name: &str| rec[header.iter().position(|h| h == name).unwrap()].parse::<f64>().unwrap();
        let m = &model.test;
        for (name, v) in [
            ("auroc", m.auroc),
            ("auroc_ci_low", m.auroc_ci_low),
            ("auroc_ci_high", m.auroc_ci_high),
            ("sensitivity", m.sensitivity),
            ("specificity", m.specificity),
            ("f1", m.f1),
        ] {
            assert_eq!(field(name).to_bits(), v.unwrap().to_bits(), "{} {name}", model.name);
        }
        assert_eq!(field("threshold").to_bits(), m.threshold.to_bits());
    }
}

#[test]
fn manifest_lists_every_file_with_its_checksum() {
    let (dir, manifest) = shared_run();
    assert!(manifest.complete);
    let mut on_disk: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n != MANIFEST_FILE)
        .collect();
    on_disk.sort();
    let listed: Vec<String> = manifest.artifacts.iter().map(|a| a.path.clone()).collect();
    assert_eq!(listed, on_disk);
    for a in &manifest.artifacts {
        let bytes = std::fs::read(dir.path().join(&a.path)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&bytes)), a.sha256);
    }
    let stages: Vec<&str> = manifest.stages.iter().map(|s| s.stage.as_str()).collect();
    assert!(stages.contains(&"explain") && stages.last() == Some(&"report"));
}

#[test]
fn same_config_and_seed_reproduce_every_checksum() {
    let (_, first) = shared_run();
    let dir = TempDir::new().unwrap();
    let second = run_pipeline(&quick_config(7, dir.path())).unwrap();
    assert_eq!(checksums(first), checksums(&second));
    assert_eq!(first.config_hash, second.config_hash);
}

#[test]
fn rebuilt_and_re_explained_runs_are_unchanged() {
    let (dir, first) = shared_run();
    let copy = copy_dir(dir.path());
    let rebuilt = rebuild_report(copy.path()).unwrap();
    assert_eq!(checksums(first), checksums(&rebuilt));
    let explained = run_explain(copy.path(), None).unwrap();
    assert_eq!(checksums(first), checksums(&explained));
}

#[test]
fn report_has_explanations_for_the_first_row() {
    let (dir, _) = shared_run();
    let report = load_report(dir.path()).unwrap();
    let ex = report.explain.unwrap();
    assert_eq!(ex.model, "gbdt_ordered");
    assert_eq!(ex.ablation.entries.len(), report.selection.selected.len());
    assert!(ex.ablation.entries.iter().all(|e| e.bootstrap.len() == 10));
    let shap = ex.shap.unwrap();
    assert_eq!(shap.values.dim(), (report.cohort.n_test, report.selection.selected.len()));
    assert_eq!(ex.ale.len(), 3);
    assert_eq!(ex.ale[0].feature, report.selection.ranking.selected[0]);
    assert!(ex.posterior_inputs.samples.iter().all(|p| *p > 0.0 && *p < 1.0));
    assert!(ex.posterior_params.is_some());
}

#[test]
fn missing_output_directories_are_created() {
    let dir = TempDir::new().unwrap();
    let mut cfg = quick_config(3, &dir.path().join("a/b/c"));
    cfg.explain.enabled = false;
    let m = run_pipeline(&cfg).unwrap();
    assert!(m.complete);
    assert!(dir.path().join("a/b/c/report.json").is_file());
}

#[test]
fn unwritable_output_is_a_filesystem_error() {
    let dir = TempDir::new().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let err = run_pipeline(&quick_config(3, &blocker.join("out"))).unwrap_err();
    assert!(matches!(err, Error::Io(_)), "{err}");
}

#[test]
fn stage_failures_are_tagged_and_leave_an_incomplete_manifest() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("bad.csv");
    std::fs::write(&data, "age,label\n70,1\n").unwrap();
    let mut cfg = quick_config(3, &dir.path().join("out"));
    cfg.data = DataSource::Csv { path: data };
    let err = run_pipeline(&cfg).unwrap_err();
    match &err {
        Error::Stage { stage, .. } => assert_eq!(stage, "dataset"),
        other => panic!("untagged error {other}"),
    }
    assert_eq!(err.exit_code(), 3);
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out").join(MANIFEST_FILE)).unwrap()).unwrap();
    assert!(!manifest.complete);
    assert!(manifest.error.unwrap().contains("dataset"));
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let dir = TempDir::new().unwrap();
    let mut cfg = quick_config(1, dir.path());
    cfg.train_fraction = 1.5;
    assert_eq!(run_pipeline(&cfg).unwrap_err().exit_code(), 2);
    let mut cfg = quick_config(1, dir.path());
    cfg.explain.model = Some("no_such_model".into());
    assert_eq!(run_pipeline(&cfg).unwrap_err().exit_code(), 2);
    assert!(std::fs::read_dir(dir.path()).unwrap().next().is_none());
}

#[test]
fn config_paths_resolve_against_the_config_file() {
    let dir = TempDir::new().unwrap();
    let (shared, _) = shared_run();
    std::fs::copy(shared.path().join("cohort.csv"), dir.path().join("cohort.csv")).unwrap();
    std::fs::write(dir.path().join("schema.json"), serde_json::to_string(&Schema::table1()).unwrap()).unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(
        &path,
        r#"{"seed": 5, "data": {"source": "csv", "path": "cohort.csv"}, "schema": "schema.json", "eval": {"n_boot": 50}}"#,
    )
    .unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.data, DataSource::Csv { path: dir.path().join("cohort.csv") });
    assert_eq!(cfg.eval.n_boot, 50);
    assert_eq!(cfg.eval.cv_folds, 5);
    // the synthetic writer and loader agree
    let table = icurisk_core::dataset::load_cohort(dir.path().join("cohort.csv"), &Schema::table1()).unwrap();
    let again = dir.path().join("again.csv");
    save_cohort(&again, &table).unwrap();
    assert_eq!(std::fs::read(&again).unwrap(), std::fs::read(dir.path().join("cohort.csv")).unwrap());
}
