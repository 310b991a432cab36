//! Leakage-safe preprocessing: every stage is fitted on training rows and
//! replayed with frozen parameters on any other rows.
//!
//! Stage order is impute → encode → scale. Distances for KNN imputation are
//! computed on internally z-scored values, while the emitted features are
//! z-scored last by [`StandardScaler`].

mod encode;
mod impute;
mod pipeline;
mod scale;
mod weights;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

pub use encode::{ordered_target_statistics, CategoryStat, TargetEncoder};
pub use impute::{DistanceKind, KnnImputer};
pub use pipeline::{FittedPipeline, PipelineConfig};
pub use scale::StandardScaler;
pub use weights::ClassWeights;

/// Fully numeric model input: one row per patient, labels carried alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    pub feature_names: Vec<String>,
    pub x: Array2<f64>,
    pub y: Vec<u8>,
}

impl DesignMatrix {
    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.x.ncols()
    }

    pub fn subset(&self, rows: &[usize]) -> DesignMatrix {
        DesignMatrix {
            feature_names: self.feature_names.clone(),
            x: self.x.select(ndarray::Axis(0), rows),
            y: rows.iter().map(|&r| self.y[r]).collect(),
        }
    }
}
