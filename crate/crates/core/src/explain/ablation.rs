use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::CohortTable;
use crate::eval::{auroc, bootstrap_aurocs};
use crate::models::{FittedModel, ModelSpec};
use crate::preprocess::PipelineConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub feature: String,
    /// Test AUROC of the refit model without `feature`.
    pub auroc: f64,
    /// `B` stratified bootstrap AUROCs of the test set.
    pub bootstrap: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub spec: ModelSpec,
    pub n_boot: usize,
    pub baseline: AblationEntry,
    pub entries: Vec<AblationEntry>,
    /// Features that could not be dropped, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl AblationReport {
    /// Mean bootstrap AUROC change from the baseline, per entry.
    pub fn deltas(&self) -> Vec<(String, f64)> {
        self.entries
            .iter()
            .map(|e| (e.feature.clone(), e.mean - self.baseline.mean))
            .collect()
    }
}

fn entry(feature: &str, scores: &[f64], labels: &[u8], n_boot: usize, seed: u64) -> Result<AblationEntry> {
    let bootstrap = bootstrap_aurocs(scores, labels, n_boot, seed)?;
    let n = bootstrap.len() as f64;
    let mean = bootstrap.iter().sum::<f64>() / n;
    let sd = if bootstrap.len() > 1 {
        (bootstrap.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(AblationEntry {
        feature: feature.to_string(),
        auroc: auroc(scores, labels)?,
        bootstrap,
        mean,
        sd,
    })
}

fn fit_and_score(
    table: &CohortTable,
    train_rows: &[usize],
    test_rows: &[usize],
    spec: &ModelSpec,
    pipeline_cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let fitted = FittedModel::fit(table, train_rows, pipeline_cfg, spec, seed)?;
    fitted.predict_table(&table.subset(test_rows)?)
}

/// Leave-one-feature-out ablation under fixed hyperparameters. Every refit
/// shares the model seed and every bootstrap shares `seed`, so entries differ
/// only by the dropped column.
#[allow(clippy::too_many_arguments)]
pub fn ablation(
    table: &CohortTable,
    train_rows: &[usize],
    test_rows: &[usize],
    spec: &ModelSpec,
    pipeline_cfg: &PipelineConfig,
    features: &[String],
    n_boot: usize,
    seed: u64,
) -> Result<AblationReport> {
    if n_boot == 0 {
        return Err(Error::Config("ablation needs at least one bootstrap replicate".into()));
    }
    let labels: Vec<u8> = test_rows.iter().map(|&r| table.labels()[r]).collect();
    let model_seed = crate::rng::derive_seed(seed, &[0]);
    let boot_seed = crate::rng::derive_seed(seed, &[1]);
    let scores = fit_and_score(table, train_rows, test_rows, spec, pipeline_cfg, model_seed)?;
    let baseline = entry("(none)", &scores, &labels, n_boot, boot_seed)?;
    let results: Vec<Result<std::result::Result<AblationEntry, (String, String)>>> = features
        .par_iter()
        .map(|name| {
            if table.n_features() <= 1 {
                return Ok(Err((name.clone(), "no features would remain".to_string())));
            }
            let reduced = table.without_feature(name)?;
            let scores = fit_and_score(&reduced, train_rows, test_rows, spec, pipeline_cfg, model_seed)?;
            Ok(Ok(entry(name, &scores, &labels, n_boot, boot_seed)?))
        })
        .collect();
    let mut entries = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r? {
            Ok(e) => entries.push(e),
            Err(s) => {
                log::warn!("ablation skipped {}: {}", s.0, s.1);
                skipped.push(s);
            }
        }
    }
    Ok(AblationReport {
        spec: spec.clone(),
        n_boot,
        baseline,
        entries,
        skipped,
    })
}

/// Ablation CSV: one row per dropped feature, baseline first.
pub fn write_ablation_csv<W: std::io::Write>(writer: W, report: &AblationReport) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "auroc", "boot_mean", "boot_sd", "delta_mean"])?;
    for e in std::iter::once(&report.baseline).chain(&report.entries) {
        w.write_record([
            e.feature.clone(),
            e.auroc.to_string(),
            e.mean.to_string(),
            e.sd.to_string(),
            (e.mean - report.baseline.mean).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
