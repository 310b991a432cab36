//! Classifiers trained on a preprocessed design matrix with per-row loss
//! weights, plus stratified k-fold grid search.
//!
//! Every model exposes a log-odds margin; probabilities are the sigmoid of the
//! margin clipped to `[PROBA_CLIP, 1 − PROBA_CLIP]`.

mod cv;
mod gbdt;
mod gnb;
pub(crate) mod logreg;
mod mlp;

pub use cv::{cross_validate, CvPlan, GridEntry, GridSearchResult};
pub use gbdt::{train_gbdt, GbdtModel, GbdtParams, Growth, Node, Tree};
pub use gnb::{train_gnb, GaussianNbModel, GnbParams};
pub use logreg::{logreg_objective, train_logreg, LinearModel, LogregParams, Penalty};
pub use mlp::{gradient_check, train_mlp, MlpConfig, MlpGradient, MlpModel};

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::dataset::CohortTable;
use crate::preprocess::{DesignMatrix, FittedPipeline, PipelineConfig};
use crate::{Error, Result};

pub const PROBA_CLIP: f64 = 1e-7;

pub fn sigmoid(m: f64) -> f64 {
    if m >= 0.0 {
        1.0 / (1.0 + (-m).exp())
    } else {
        let e = m.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^m)` without overflow.
pub(crate) fn log1p_exp(m: f64) -> f64 {
    m.max(0.0) + (-m.abs()).exp().ln_1p()
}

pub(crate) fn check_design(x: ArrayView2<f64>, y: &[u8], w: &[f64]) -> Result<()> {
    if x.nrows() != y.len() || y.len() != w.len() {
        return Err(Error::Config(format!(
            "design has {} rows, {} labels and {} weights",
            x.nrows(),
            y.len(),
            w.len()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::Config("empty training set".into()));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("design matrix has non-finite or missing values".into()));
    }
    if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || w.iter().sum::<f64>() <= 0.0 {
        return Err(Error::Config("sample weights must be nonnegative with a positive sum".into()));
    }
    if y.iter().any(|&v| v > 1) {
        return Err(Error::Config("labels must be 0 or 1".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "model", rename_all = "snake_case")]
pub enum TrainedModel {
    Gbdt(GbdtModel),
    Logreg(LinearModel),
    GaussianNb(GaussianNbModel),
    Mlp(MlpModel),
}

impl TrainedModel {
    pub fn n_features(&self) -> usize {
        match self {
            Self::Gbdt(m) => m.n_features,
            Self::Logreg(m) => m.weights.len(),
            Self::GaussianNb(m) => m.means[0].len(),
            Self::Mlp(m) => m.n_features(),
        }
    }

    /// Log-odds of the positive class for one preprocessed row.
    pub fn margin(&self, row: &[f64]) -> f64 {
        match self {
            Self::Gbdt(m) => m.margin(row),
            Self::Logreg(m) => m.margin(row),
            Self::GaussianNb(m) => m.margin(row),
            Self::Mlp(m) => m.margin(row),
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        sigmoid(self.margin(row)).clamp(PROBA_CLIP, 1.0 - PROBA_CLIP)
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        if x.ncols() != self.n_features() {
            return Err(Error::Schema(format!(
                "model expects {} features, got {}",
                self.n_features(),
                x.ncols()
            )));
        }
        Ok(x.rows().into_iter().map(|r| self.predict_row(&r.to_vec())).collect())
    }

    pub fn as_gbdt(&self) -> Option<&GbdtModel> {
        match self {
            Self::Gbdt(m) => Some(m),
            _ => None,
        }
    }
}

/// One hyperparameter configuration of one family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ModelSpec {
    Gbdt(GbdtParams),
    Logreg(LogregParams),
    GaussianNb(GnbParams),
    Mlp(MlpConfig),
}

impl ModelSpec {
    pub fn train(&self, x: ArrayView2<f64>, y: &[u8], w: &[f64], seed: u64) -> Result<TrainedModel> {
        Ok(match self {
            Self::Gbdt(p) => TrainedModel::Gbdt(train_gbdt(x, y, w, p, seed)?),
            Self::Logreg(p) => TrainedModel::Logreg(train_logreg(x, y, w, p)?),
            Self::GaussianNb(p) => TrainedModel::GaussianNb(train_gnb(x, y, w, p)?),
            Self::Mlp(p) => TrainedModel::Mlp(train_mlp(x, y, w, p, seed)?),
        })
    }

    pub fn ordered_mode(&self) -> bool {
        matches!(self, Self::Gbdt(p) if p.ordered_mode)
    }

    /// Compact description for reports.
    pub fn describe(&self) -> String {
        match self {
            Self::Gbdt(p) => format!(
                "gbdt(depth={}, trees={}, lr={}, l2={}, subsample={}, growth={:?}, ordered={})",
                p.max_depth, p.n_trees, p.learning_rate, p.l2_leaf, p.subsample, p.growth, p.ordered_mode
            ),
            Self::Logreg(p) => format!("logreg(penalty={:?}, C={})", p.penalty, p.c),
            Self::GaussianNb(p) => format!("gaussian_nb(var_smoothing={})", p.var_smoothing),
            Self::Mlp(p) => format!(
                "mlp(hidden={}, lr={}, batch={}, dropout={})",
                p.hidden, p.learning_rate, p.batch_size, p.dropout
            ),
        }
    }
}

/// A frozen preprocessing pipeline and the model trained on its output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedModel {
    pub spec: ModelSpec,
    pub pipeline: FittedPipeline,
    pub model: TrainedModel,
}

impl FittedModel {
    /// Fits the pipeline on `train_rows` of `table`, then the model on the
    /// transformed rows weighted by the pipeline's class weights.
    pub fn fit(
        table: &CohortTable,
        train_rows: &[usize],
        pipeline_cfg: &PipelineConfig,
        spec: &ModelSpec,
        seed: u64,
    ) -> Result<Self> {
        let pipeline = FittedPipeline::fit(table, train_rows, pipeline_cfg)?;
        let design = training_design(&pipeline, table, spec, seed)?;
        let w = pipeline.class_weights.sample_weights(&design.y);
        let model = spec.train(design.x.view(), &design.y, &w, seed)?;
        Ok(Self {
            spec: spec.clone(),
            pipeline,
            model,
        })
    }

    /// Probabilities for every row of `table`.
    pub fn predict_table(&self, table: &CohortTable) -> Result<Vec<f64>> {
        let design = self.pipeline.transform(table)?;
        self.model.predict_proba(design.x.view())
    }

    /// Probability for one raw row (missing entries imputed).
    pub fn predict_raw(&self, row: &[Option<f64>]) -> f64 {
        self.model.predict_row(&self.pipeline.transform_row(row))
    }
}

pub(crate) fn training_design(
    pipeline: &FittedPipeline,
    table: &CohortTable,
    spec: &ModelSpec,
    seed: u64,
) -> Result<DesignMatrix> {
    if spec.ordered_mode() && pipeline.has_encoders() {
        pipeline.transform_train_ordered(table, seed)
    } else {
        Ok(pipeline
            .transform(&table.subset(&pipeline.train_rows)?)?)
    }
}

/// A named benchmark row: one family and its hyperparameter grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkModel {
    pub name: String,
    pub grid: Vec<ModelSpec>,
}

pub fn default_gbdt_grid(base: &GbdtParams) -> Vec<ModelSpec> {
    let mut grid = Vec::new();
    for max_depth in [2, 3, 4] {
        for n_trees in [100, 300] {
            for learning_rate in [0.05, 0.1] {
                for l2_leaf in [1.0, 5.0] {
                    grid.push(ModelSpec::Gbdt(GbdtParams {
                        max_depth,
                        n_trees,
                        learning_rate,
                        l2_leaf,
                        ..base.clone()
                    }));
                }
            }
        }
    }
    grid
}

pub fn default_logreg_grid() -> Vec<ModelSpec> {
    let mut grid = Vec::new();
    for penalty in [Penalty::L1, Penalty::L2] {
        for c in [0.01, 0.1, 1.0, 10.0] {
            grid.push(ModelSpec::Logreg(LogregParams { penalty, c }));
        }
    }
    grid
}

pub fn default_mlp_grid() -> Vec<ModelSpec> {
    let mut grid = Vec::new();
    for hidden in [8, 16] {
        for learning_rate in [1e-3, 1e-2] {
            grid.push(ModelSpec::Mlp(MlpConfig {
                hidden,
                learning_rate,
                ..MlpConfig::default()
            }));
        }
    }
    grid
}

/// The six benchmark rows in reporting order. The three boosted-tree rows
/// differ in growth policy, row subsampling and ordered statistics.
pub fn default_benchmark() -> Vec<BenchmarkModel> {
    let row = |name: &str, grid| BenchmarkModel {
        name: name.to_string(),
        grid,
    };
    vec![
        row(
            "gbdt_ordered",
            default_gbdt_grid(&GbdtParams {
                growth: Growth::Symmetric,
                ordered_mode: true,
                ..GbdtParams::default()
            }),
        ),
        row(
            "gbdt_subsample",
            default_gbdt_grid(&GbdtParams {
                subsample: 0.8,
                ..GbdtParams::default()
            }),
        ),
        row("gbdt_exact", default_gbdt_grid(&GbdtParams::default())),
        row("logistic_regression", default_logreg_grid()),
        row("naive_bayes", vec![ModelSpec::GaussianNb(GnbParams::default())]),
        row("neural_network", default_mlp_grid()),
    ]
}
