use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{training_design, ModelSpec};
use crate::dataset::CohortTable;
use crate::eval::auroc;
use crate::preprocess::{DesignMatrix, FittedPipeline, PipelineConfig};
use crate::rng;
use crate::{Error, Result};

/// Stratified folds over a set of table rows. `folds[f]` lists the table rows
/// validated in fold `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl CvPlan {
    /// Shuffles each class separately and deals its rows round-robin, so each
    /// fold's class counts differ from the even share by less than one.
    pub fn stratified(rows: &[usize], labels: &[u8], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Config(format!("cross-validation needs k >= 2, got {k}")));
        }
        let mut folds = vec![Vec::new(); k];
        let mut r = rng::seeded(seed);
        // class 0 continues the deal where class 1 stopped
        let mut offset = 0;
        for class in [1u8, 0] {
            let mut members: Vec<usize> = rows.iter().copied().filter(|&i| labels[i] == class).collect();
            if members.len() < k {
                return Err(Error::Stratification(format!(
                    "class {class} has {} rows, fewer than {k} folds",
                    members.len()
                )));
            }
            members.shuffle(&mut r);
            let count = members.len();
            for (i, row) in members.into_iter().enumerate() {
                folds[(offset + i) % k].push(row);
            }
            offset += count;
        }
        for f in &mut folds {
            f.sort_unstable();
        }
        Ok(Self { folds, seed })
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    /// All planned rows not in fold `f`, ascending.
    pub fn train_rows(&self, f: usize) -> Vec<usize> {
        let mut rows: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|(g, _)| *g != f)
            .flat_map(|(_, v)| v.iter().copied())
            .collect();
        rows.sort_unstable();
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub spec: ModelSpec,
    pub fold_auroc: Vec<f64>,
    pub mean_auroc: f64,
    pub sd_auroc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchResult {
    pub plan: CvPlan,
    pub entries: Vec<GridEntry>,
    /// Index of the winning entry.
    pub best: usize,
    /// Table rows covered by the plan, ascending.
    pub rows: Vec<usize>,
    /// Winner's out-of-fold probabilities, aligned with `rows`.
    pub oof_scores: Vec<f64>,
}

impl GridSearchResult {
    pub fn best_spec(&self) -> &ModelSpec {
        &self.entries[self.best].spec
    }

    pub fn oof_labels(&self, table: &CohortTable) -> Vec<u8> {
        self.rows.iter().map(|&i| table.labels()[i]).collect()
    }
}

struct FoldData {
    pipeline: FittedPipeline,
    val_rows: Vec<usize>,
    val: DesignMatrix,
}

/// Grid search with preprocessing refit inside every fold. The winner has the
/// largest mean out-of-fold AUROC, ties going to the earlier grid entry.
/// Task `(fold, config)` trains with a seed derived from `(seed, fold, config)`.
pub fn cross_validate(
    table: &CohortTable,
    train_rows: &[usize],
    grid: &[ModelSpec],
    pipeline_cfg: &PipelineConfig,
    k: usize,
    seed: u64,
) -> Result<GridSearchResult> {
    if grid.is_empty() {
        return Err(Error::Config("empty model grid".into()));
    }
    let plan = CvPlan::stratified(train_rows, table.labels(), k, seed)?;
    let folds: Vec<FoldData> = (0..k)
        .into_par_iter()
        .map(|f| {
            let pipeline = FittedPipeline::fit(table, &plan.train_rows(f), pipeline_cfg)?;
            let val_rows = plan.folds[f].clone();
            let val = pipeline.transform(&table.subset(&val_rows)?)?;
            Ok(FoldData {
                pipeline,
                val_rows,
                val,
            })
        })
        .collect::<Result<_>>()?;
    // plain training designs are shared by all configs of a fold
    let plain: Vec<DesignMatrix> = folds
        .par_iter()
        .map(|fd| fd.pipeline.transform(&table.subset(&fd.pipeline.train_rows)?))
        .collect::<Result<_>>()?;
    let tasks: Vec<(usize, usize)> = (0..grid.len()).flat_map(|c| (0..k).map(move |f| (c, f))).collect();
    let scores: Vec<Vec<f64>> = tasks
        .par_iter()
        .map(|&(c, f)| {
            let task_seed = rng::derive_seed(seed, &[f as u64, c as u64]);
            let fd = &folds[f];
            let ordered;
            let design = if grid[c].ordered_mode() && fd.pipeline.has_encoders() {
                ordered = training_design(&fd.pipeline, table, &grid[c], task_seed)?;
                &ordered
            } else {
                &plain[f]
            };
            let w = fd.pipeline.class_weights.sample_weights(&design.y);
            let model = grid[c].train(design.x.view(), &design.y, &w, task_seed)?;
            model.predict_proba(fd.val.x.view())
        })
        .collect::<Result<_>>()?;
    let mut entries = Vec::with_capacity(grid.len());
    for (c, spec) in grid.iter().enumerate() {
        let fold_auroc = (0..k)
            .map(|f| auroc(&scores[c * k + f], &folds[f].val.y))
            .collect::<Result<Vec<f64>>>()?;
        let mean = fold_auroc.iter().sum::<f64>() / k as f64;
        let sd = (fold_auroc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (k - 1) as f64).sqrt();
        entries.push(GridEntry {
            spec: spec.clone(),
            fold_auroc,
            mean_auroc: mean,
            sd_auroc: sd,
        });
    }
    let mut best = 0;
    for (c, e) in entries.iter().enumerate() {
        if e.mean_auroc > entries[best].mean_auroc {
            best = c;
        }
    }
    let mut rows = train_rows.to_vec();
    rows.sort_unstable();
    let mut oof = vec![f64::NAN; rows.len()];
    for (f, fd) in folds.iter().enumerate() {
        for (&row, &s) in fd.val_rows.iter().zip(&scores[best * k + f]) {
            let pos = rows.binary_search(&row).expect("fold row in plan");
            oof[pos] = s;
        }
    }
    Ok(GridSearchResult {
        plan,
        entries,
        best,
        rows,
        oof_scores: oof,
    })
}
