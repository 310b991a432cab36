use serde::{Deserialize, Serialize};

use super::encode::encoded_schema;
use super::{ordered_target_statistics, ClassWeights, DesignMatrix, KnnImputer, StandardScaler, TargetEncoder};
use crate::dataset::{CohortTable, FeatureKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Neighbours used by the KNN imputer.
    pub k: usize,
    /// Target-encoding smoothing strength.
    pub alpha: f64,
    /// Features to target-encode. `None` encodes every categorical feature;
    /// binary flags are never encoded unless listed here.
    pub encode: Option<Vec<String>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k: 5,
            alpha: 10.0,
            encode: None,
        }
    }
}

/// Frozen impute → encode → scale parameters plus class weights, all learned
/// from `train_rows` of the table passed to [`FittedPipeline::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub feature_names: Vec<String>,
    pub imputer: KnnImputer,
    pub encoders: Vec<TargetEncoder>,
    pub scaler: StandardScaler,
    pub class_weights: ClassWeights,
    pub train_rows: Vec<usize>,
}

impl FittedPipeline {
    pub fn fit(table: &CohortTable, train_rows: &[usize], cfg: &PipelineConfig) -> Result<Self> {
        if train_rows.is_empty() {
            return Err(Error::Config("pipeline needs at least one training row".into()));
        }
        let train = table.subset(train_rows)?;
        let imputer = KnnImputer::fit(&train, cfg.k)?;
        let mut current = imputer.impute(&train)?;

        let to_encode: Vec<String> = match &cfg.encode {
            Some(list) => list.clone(),
            None => table
                .schema()
                .features
                .iter()
                .filter(|f| f.kind == FeatureKind::Categorical)
                .map(|f| f.name.clone())
                .collect(),
        };
        let mut encoders = Vec::with_capacity(to_encode.len());
        for feature in &to_encode {
            let enc = TargetEncoder::fit(&current, feature, cfg.alpha)?;
            current = enc.encode(&current)?;
            encoders.push(enc);
        }
        let scaler = StandardScaler::fit(&current)?;
        Ok(Self {
            feature_names: table.schema().names(),
            imputer,
            encoders,
            scaler,
            class_weights: ClassWeights::from_labels(train.labels())?,
            train_rows: train_rows.to_vec(),
        })
    }

    fn check_schema(&self, table: &CohortTable) -> Result<()> {
        if table.schema().names() != self.feature_names {
            return Err(Error::Schema(format!(
                "pipeline expects features {:?}, got {:?}",
                self.feature_names,
                table.schema().names()
            )));
        }
        Ok(())
    }

    /// Replays the frozen stages on `table`. Labels are carried through but
    /// never read.
    pub fn transform(&self, table: &CohortTable) -> Result<DesignMatrix> {
        self.check_schema(table)?;
        let mut current = self.imputer.impute(table)?;
        for enc in &self.encoders {
            current = enc.encode(&current)?;
        }
        self.scaler.transform(&current)
    }

    /// Design matrix for the training rows with every encoded column replaced
    /// by ordered target statistics, for ordered boosting.
    pub fn transform_train_ordered(&self, table: &CohortTable, seed: u64) -> Result<DesignMatrix> {
        self.check_schema(table)?;
        let train = table.subset(&self.train_rows)?;
        let mut current = self.imputer.impute(&train)?;
        for (i, enc) in self.encoders.iter().enumerate() {
            let col = current.schema().index_of(&enc.feature).expect("encoder feature");
            let raw: Vec<f64> = current.column(col).map(|v| v.expect("imputed")).collect();
            let ts = ordered_target_statistics(
                &raw,
                current.labels(),
                enc.alpha,
                enc.global_mean,
                crate::rng::derive_seed(seed, &[i as u64]),
            );
            for (r, v) in ts.into_iter().enumerate() {
                current.set_value(r, col, Some(v));
            }
            let (schema, values, labels) = current.into_parts();
            current = CohortTable::from_flat(encoded_schema(&schema, col), values, labels)?;
        }
        self.scaler.transform(&current)
    }

    /// Transforms a single raw row (missing entries allowed).
    pub fn transform_row(&self, row: &[Option<f64>]) -> Vec<f64> {
        let mut out = self.imputer.impute_row(row);
        for enc in &self.encoders {
            let col = self
                .feature_names
                .iter()
                .position(|n| *n == enc.feature)
                .expect("encoder feature");
            out[col] = enc.encode_value(out[col]);
        }
        self.scaler.transform_row(&mut out);
        out
    }

    pub fn has_encoders(&self) -> bool {
        !self.encoders.is_empty()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}
