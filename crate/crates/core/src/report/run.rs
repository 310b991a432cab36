use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{DataSource, RunConfig};
use super::emit::emit_report;
use crate::dataset::{
    load_cohort, reference, save_cohort, stratified_split, summarize, synth_cohort, CohortTable, FeatureKind,
    Schema, SplitIndex, SynthConfig,
};
use crate::eval::{compare_cohorts, evaluate, roc_curve, tune_threshold, ComparisonRow, MetricReport};
use crate::explain::{
    ablation, ale, background_sample, posterior_risk_inputs, posterior_risk_params, shap_tree, AblationReport,
    AleCurve, AleKind, PosteriorRisk, ShapMatrix,
};
use crate::models::{cross_validate, FittedModel, GridEntry, ModelSpec};
use crate::rng::derive_seed;
use crate::select::{coverage_filter, rank_features, CoverageReport, MiRanking};
use crate::{Error, Result};

pub const REPORT_FILE: &str = "report.json";
pub const STATE_FILE: &str = "models.json";
pub const COHORT_FILE: &str = "cohort.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

// Stream indices under the run seed.
const SEED_SYNTH: u64 = 0;
const SEED_SPLIT: u64 = 1;
const SEED_CV: u64 = 2;
const SEED_REFIT: u64 = 3;
const SEED_BOOT_TRAIN: u64 = 4;
const SEED_BOOT_TEST: u64 = 5;
const SEED_ABLATION: u64 = 6;
const SEED_SHAP: u64 = 7;
const SEED_DREAM_INPUTS: u64 = 8;
const SEED_DREAM_PARAMS: u64 = 9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortInfo {
    pub n_rows: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub n_features: usize,
    pub event_rate: f64,
    pub train_event_rate: f64,
    pub test_event_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub coverage: CoverageReport,
    pub ranking: MiRanking,
    pub selected: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocSeries {
    pub fpr: Vec<f64>,
    pub tpr: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult {
    pub name: String,
    /// Winning grid entry, refit on all training rows.
    pub spec: ModelSpec,
    pub cv: Vec<GridEntry>,
    /// Tuned on out-of-fold training scores and applied unchanged to the test set.
    pub threshold: f64,
    /// Out-of-fold training metrics.
    pub train: MetricReport,
    pub test: MetricReport,
    pub roc_test: RocSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamPosterior {
    /// Cohort row whose risk is explained (median test-set risk).
    pub row: usize,
    pub prior_sd: f64,
    pub risk: PosteriorRisk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainResult {
    pub model: String,
    pub ablation: AblationReport,
    /// Test-set attributions in log-odds units, background from training rows.
    pub shap: Option<ShapMatrix>,
    /// Curves on the predicted probability over imputed training rows in raw units.
    pub ale: Vec<AleCurve>,
    pub posterior_inputs: PosteriorRisk,
    pub posterior_params: Option<ParamPosterior>,
    pub notes: Vec<String>,
}

/// Every number the run produces; CSV and SVG artifacts are projections of it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub crate_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub cohort: CohortInfo,
    /// Training (a) vs test (b).
    pub train_vs_test: Vec<ComparisonRow>,
    /// Survivors (a) vs non-survivors (b) over the whole cohort.
    pub outcome_comparison: Vec<ComparisonRow>,
    pub selection: SelectionResult,
    pub models: Vec<ModelResult>,
    pub explain: Option<ExplainResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedModel {
    pub name: String,
    pub model: FittedModel,
}

/// What `explain` needs to resume from a finished run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunState {
    pub config: RunConfig,
    pub schema: Schema,
    pub split: SplitIndex,
    pub selected: Vec<String>,
    pub fitted: Vec<NamedModel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub crate_version: String,
    /// Every file in the output directory except the manifest, by name.
    pub artifacts: Vec<Artifact>,
    pub stages: Vec<StageTiming>,
    pub complete: bool,
    pub error: Option<String>,
}

impl RunManifest {
    fn collect(out: &Path, config_hash: String, stages: Vec<StageTiming>, error: Option<&Error>) -> Result<Self> {
        let mut names: Vec<PathBuf> = std::fs::read_dir(out)?
            .map(|e| e.map(|e| e.path()))
            .collect::<std::io::Result<_>>()?;
        names.retain(|p| p.is_file() && p.file_name().is_some_and(|n| n != MANIFEST_FILE));
        names.sort();
        let artifacts = names
            .iter()
            .map(|p| {
                let bytes = std::fs::read(p)?;
                Ok(Artifact {
                    path: p.file_name().unwrap().to_string_lossy().into_owned(),
                    sha256: hex::encode(Sha256::digest(&bytes)),
                    bytes: bytes.len() as u64,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config_hash,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            artifacts,
            stages,
            complete: error.is_none(),
            error: error.map(|e| e.to_string()),
        })
    }

    pub fn checksum(&self, path: &str) -> Option<&str> {
        self.artifacts.iter().find(|a| a.path == path).map(|a| a.sha256.as_str())
    }

    fn write(&self, out: &Path) -> Result<()> {
        std::fs::write(out.join(MANIFEST_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Default)]
struct StageLog {
    timings: Vec<StageTiming>,
}

impl StageLog {
    fn run<T>(&mut self, stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        log::info!("stage {stage}");
        let result = f().map_err(|e| e.in_stage(stage));
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
        result
    }
}

/// Writes the manifest whatever the outcome; a failed run is marked incomplete.
fn finish(out: &Path, hash: String, log: StageLog, result: Result<()>) -> Result<RunManifest> {
    let manifest = RunManifest::collect(out, hash, log.timings, result.as_ref().err())?;
    manifest.write(out)?;
    result.map(|()| manifest)
}

fn load_schema(cfg: &RunConfig) -> Result<Schema> {
    match &cfg.schema {
        Some(p) => Schema::load(p),
        None => Ok(Schema::table1()),
    }
}

/// The cohort named by the config: loaded, or generated from the reference moments.
pub fn load_or_synth(cfg: &RunConfig, schema: &Schema) -> Result<CohortTable> {
    match &cfg.data {
        DataSource::Csv { path } => load_cohort(path, schema),
        DataSource::Synth {
            n,
            event_rate,
            missing_rates,
        } => synth_cohort(
            schema,
            &reference::survival_summary(),
            &SynthConfig {
                n: *n,
                event_rate: *event_rate,
                missing_rates: missing_rates.clone(),
                seed: derive_seed(cfg.seed, &[SEED_SYNTH]),
            },
        ),
    }
}

fn event_rate(labels: impl Iterator<Item = u8>) -> f64 {
    let (n, pos) = labels.fold((0usize, 0usize), |(n, p), y| (n + 1, p + usize::from(y)));
    pos as f64 / n.max(1) as f64
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)?)?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

/// Dataset → split → selection → grid-search CV → test evaluation → explain,
/// writing every artifact into `cfg.out` and the manifest last.
pub fn run_pipeline(cfg: &RunConfig) -> Result<RunManifest> {
    cfg.validate()?;
    let out = cfg.out.clone();
    std::fs::create_dir_all(&out)?;
    let hash = cfg.hash()?;
    let mut log = StageLog::default();
    let result = execute(cfg, &out, &hash, &mut log);
    finish(&out, hash, log, result)
}

fn execute(cfg: &RunConfig, out: &Path, hash: &str, log: &mut StageLog) -> Result<()> {
    let seed = cfg.seed;
    let schema = log.run("dataset", || load_schema(cfg))?;
    let cohort = log.run("dataset", || {
        let cohort = load_or_synth(cfg, &schema)?;
        save_cohort(out.join(COHORT_FILE), &cohort)?;
        Ok(cohort)
    })?;
    let split = log.run("split", || stratified_split(&cohort, cfg.train_fraction, derive_seed(seed, &[SEED_SPLIT])))?;
    let train_raw = cohort.subset(&split.train_rows)?;
    let (train_vs_test, outcome_comparison) = log.run("compare", || {
        let test_raw = cohort.subset(&split.test_rows)?;
        let by_label = |y: u8| -> Result<CohortTable> {
            let rows: Vec<usize> = (0..cohort.n_rows()).filter(|&i| cohort.labels()[i] == y).collect();
            cohort.subset(&rows)
        };
        Ok((compare_cohorts(&train_raw, &test_raw)?, compare_cohorts(&by_label(0)?, &by_label(1)?)?))
    })?;
    let selection = log.run("select", || {
        let coverage = coverage_filter(&train_raw, &cfg.selection.coverage)?;
        let ranking = rank_features(&train_raw.project(&coverage.kept)?, &cfg.selection.rank, cfg.selection.top_k)?;
        let selected = ranking.selected.clone();
        Ok(SelectionResult {
            coverage,
            ranking,
            selected,
        })
    })?;
    let table = cohort.project(&selection.selected)?;
    let test_table = table.subset(&split.test_rows)?;
    let test_labels = test_table.labels().to_vec();

    let mut models = Vec::new();
    let mut fitted = Vec::new();
    for (i, bench) in cfg.benchmark().iter().enumerate() {
        let i = i as u64;
        let (result, model) = log.run(&format!("models:{}", bench.name), || {
            let cv = cross_validate(
                &table,
                &split.train_rows,
                &bench.grid,
                &cfg.preprocess,
                cfg.eval.cv_folds,
                derive_seed(seed, &[SEED_CV, i]),
            )?;
            let oof_labels = cv.oof_labels(&table);
            let threshold = tune_threshold(&cv.oof_scores, &oof_labels, cfg.eval.threshold)?;
            let train = evaluate(
                &cv.oof_scores,
                &oof_labels,
                threshold,
                cfg.eval.n_boot,
                derive_seed(seed, &[SEED_BOOT_TRAIN]),
            )?;
            let model = FittedModel::fit(
                &table,
                &split.train_rows,
                &cfg.preprocess,
                cv.best_spec(),
                derive_seed(seed, &[SEED_REFIT, i]),
            )?;
            let scores = model.predict_table(&test_table)?;
            let test = evaluate(&scores, &test_labels, threshold, cfg.eval.n_boot, derive_seed(seed, &[SEED_BOOT_TEST]))?;
            let roc = roc_curve(&scores, &test_labels)?;
            let result = ModelResult {
                name: bench.name.clone(),
                spec: cv.best_spec().clone(),
                cv: cv.entries,
                threshold,
                train,
                test,
                roc_test: RocSeries {
                    fpr: roc.iter().map(|p| p.fpr).collect(),
                    tpr: roc.iter().map(|p| p.tpr).collect(),
                },
            };
            Ok((result, model))
        })?;
        models.push(result);
        fitted.push(NamedModel {
            name: bench.name.clone(),
            model,
        });
    }

    let mut stored = cfg.clone();
    stored.out = PathBuf::new();
    let state = RunState {
        config: stored,
        schema,
        split,
        selected: selection.selected.clone(),
        fitted,
    };
    write_json(&out.join(STATE_FILE), &state)?;

    let explain = if cfg.explain.enabled {
        Some(log.run("explain", || explain_run(cfg, &state, &table, &selection.ranking))?)
    } else {
        None
    };
    let report = Report {
        crate_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: hash.to_string(),
        seed,
        cohort: CohortInfo {
            n_rows: cohort.n_rows(),
            n_train: state.split.train_rows.len(),
            n_test: state.split.test_rows.len(),
            n_features: cohort.n_features(),
            event_rate: cohort.event_rate(),
            train_event_rate: event_rate(train_raw.labels().iter().copied()),
            test_event_rate: event_rate(test_labels.iter().copied()),
        },
        train_vs_test,
        outcome_comparison,
        selection,
        models,
        explain,
    };
    log.run("report", || emit_report(&report, out))
}

fn explain_run(cfg: &RunConfig, state: &RunState, table: &CohortTable, ranking: &MiRanking) -> Result<ExplainResult> {
    let seed = cfg.seed;
    let ex = &cfg.explain;
    let chosen = match &ex.model {
        Some(name) => state
            .fitted
            .iter()
            .find(|m| &m.name == name)
            .ok_or_else(|| Error::Config(format!("no fitted model `{name}`")))?,
        None => state.fitted.first().ok_or_else(|| Error::Config("no fitted models".into()))?,
    };
    let fitted = &chosen.model;
    let split = &state.split;
    let mut notes = Vec::new();

    let ablation = ablation(
        table,
        &split.train_rows,
        &split.test_rows,
        &fitted.spec,
        &cfg.preprocess,
        &state.selected,
        ex.ablation_boot,
        derive_seed(seed, &[SEED_ABLATION]),
    )?;
    notes.push(format!("ablation refits `{}` with fixed hyperparameters: {}", chosen.name, fitted.spec.describe()));

    let train_table = table.subset(&split.train_rows)?;
    let test_table = table.subset(&split.test_rows)?;
    let shap = if fitted.model.as_gbdt().is_some() {
        let train = fitted.pipeline.transform(&train_table)?;
        let test = fitted.pipeline.transform(&test_table)?;
        let background = background_sample(train.x.view(), ex.shap_background, derive_seed(seed, &[SEED_SHAP]));
        Some(shap_tree(&fitted.model, &test.feature_names, test.x.view(), background.view())?)
    } else {
        notes.push(format!("SHAP skipped: `{}` is not a boosted-tree model", chosen.name));
        None
    };

    let imputed = fitted.pipeline.imputer.impute(&train_table)?.to_dense()?;
    let predict = |r: &[f64]| fitted.predict_raw(&r.iter().map(|v| Some(*v)).collect::<Vec<_>>());
    let n_ale = ex.ale_features.unwrap_or(state.selected.len()).min(state.selected.len());
    let ale_targets: Vec<&String> = ranking.selected.iter().take(n_ale).collect();
    let ale_curves = ale_targets
        .par_iter()
        .map(|name| {
            let j = table.schema().index_of(name).expect("selected feature");
            let kind = match table.schema().features[j].kind {
                FeatureKind::Binary => AleKind::Binary,
                _ => AleKind::Binned,
            };
            ale(predict, imputed.view(), j, name, kind, ex.ale_bins)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut dream = ex.dream.clone();
    dream.seed = derive_seed(seed, &[SEED_DREAM_INPUTS]);
    let summary = summarize(&train_table, true);
    let posterior_inputs = posterior_risk_inputs(predict, table.schema(), &summary, 1, &dream)?;

    let posterior_params = match ex.prior_sd {
        Some(prior_sd) => {
            let train = fitted.pipeline.transform(&train_table)?;
            let test = fitted.pipeline.transform(&test_table)?;
            let scores = fitted.model.predict_proba(test.x.view())?;
            let mut order: Vec<usize> = (0..scores.len()).collect();
            order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
            let pick = order[(order.len() - 1) / 2];
            let mut dream = ex.dream.clone();
            dream.seed = derive_seed(seed, &[SEED_DREAM_PARAMS]);
            let risk = posterior_risk_params(train.x.view(), &train.y, &test.x.row(pick).to_vec(), prior_sd, &dream)?;
            Some(ParamPosterior {
                row: split.test_rows[pick],
                prior_sd,
                risk,
            })
        }
        None => None,
    };

    Ok(ExplainResult {
        model: chosen.name.clone(),
        ablation,
        shap,
        ale: ale_curves,
        posterior_inputs,
        posterior_params,
        notes,
    })
}

/// Recomputes the explain section of a finished run in `out`, optionally
/// with new explain settings, and re-emits every artifact.
pub fn run_explain(out: &Path, explain: Option<super::config::ExplainConfig>) -> Result<RunManifest> {
    let mut state: RunState = read_json(&out.join(STATE_FILE)).map_err(|e| e.in_stage("load"))?;
    let mut report: Report = read_json(&out.join(REPORT_FILE)).map_err(|e| e.in_stage("load"))?;
    if let Some(ex) = explain {
        state.config.explain = ex;
        state.config.explain.enabled = true;
    }
    let cfg = state.config.clone();
    cfg.validate()?;
    let mut log = StageLog::default();
    let result = (|| {
        let cohort = log.run("dataset", || load_cohort(out.join(COHORT_FILE), &state.schema))?;
        let table = cohort.project(&state.selected)?;
        let explain = log.run("explain", || explain_run(&cfg, &state, &table, &report.selection.ranking))?;
        report.explain = Some(explain);
        log.run("report", || emit_report(&report, out))
    })();
    finish(out, report.config_hash.clone(), log, result)
}

/// Re-emits every CSV/SVG projection from `report.json` in `out`.
pub fn rebuild_report(out: &Path) -> Result<RunManifest> {
    let mut log = StageLog::default();
    let report: Report = log.run("load", || read_json(&out.join(REPORT_FILE)))?;
    let result = log.run("report", || emit_report(&report, out));
    finish(out, report.config_hash.clone(), log, result)
}

pub fn load_report(out: &Path) -> Result<Report> {
    read_json(&out.join(REPORT_FILE))
}
