use serde::{Deserialize, Serialize};

use super::DesignMatrix;
use crate::dataset::CohortTable;
use crate::{Error, Result};

/// Z-score parameters with the population (divide-by-n) standard deviation.
/// Features with zero spread map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardScaler {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    pub sds: Vec<f64>,
}

impl StandardScaler {
    pub fn fit(train: &CohortTable) -> Result<Self> {
        let x = train.to_dense()?;
        let n = x.nrows() as f64;
        let means: Vec<f64> = x.columns().into_iter().map(|c| c.sum() / n).collect();
        let sds = x
            .columns()
            .into_iter()
            .zip(&means)
            .map(|(c, m)| (c.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n).sqrt())
            .collect();
        Ok(Self {
            feature_names: train.schema().names(),
            means,
            sds,
        })
    }

    pub fn transform(&self, table: &CohortTable) -> Result<DesignMatrix> {
        if table.schema().names() != self.feature_names {
            return Err(Error::Schema("scaler applied to a different feature set".into()));
        }
        let mut x = table.to_dense()?;
        for (mut col, (&m, &s)) in x.columns_mut().into_iter().zip(self.means.iter().zip(&self.sds)) {
            if s > 0.0 {
                col.mapv_inplace(|v| (v - m) / s);
            } else {
                col.fill(0.0);
            }
        }
        Ok(DesignMatrix {
            feature_names: self.feature_names.clone(),
            x,
            y: table.labels().to_vec(),
        })
    }

    /// Scales a single complete row in place.
    pub fn transform_row(&self, row: &mut [f64]) {
        for ((v, &m), &s) in row.iter_mut().zip(&self.means).zip(&self.sds) {
            *v = if s > 0.0 { (*v - m) / s } else { 0.0 };
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSpec, Schema};

    fn table(cols: &[&[f64]]) -> CohortTable {
        let schema = Schema::new(
            (0..cols.len())
                .map(|i| FeatureSpec::continuous(format!("f{i}")))
                .collect(),
        )
        .unwrap();
        let n = cols[0].len();
        let rows = (0..n)
            .map(|r| cols.iter().map(|c| Some(c[r])).collect())
            .collect();
        CohortTable::new(schema, rows, (0..n).map(|i| (i % 2) as u8).collect()).unwrap()
    }

    #[test]
    fn symmetric_column() {
        let t = table(&[&[1.0, 2.0, 3.0]]);
        let s = StandardScaler::fit(&t).unwrap();
        let out = s.transform(&t).unwrap();
        let expected = [-1.224744871391589, 0.0, 1.224744871391589];
        for (v, e) in out.x.column(0).iter().zip(expected) {
            assert!((v - e).abs() < 1e-15);
        }
    }

    #[test]
    fn constant_column_maps_to_zero() {
        let t = table(&[&[4.0, 4.0, 4.0], &[1.0, 2.0, 6.0]]);
        let out = StandardScaler::fit(&t).unwrap().transform(&t).unwrap();
        assert!(out.x.column(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn training_fold_is_standardized() {
        let a: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin() * 10.0 + 3.0).collect();
        let b: Vec<f64> = (0..50).map(|i| (i as f64).sqrt()).collect();
        let t = table(&[&a, &b]);
        let out = StandardScaler::fit(&t).unwrap().transform(&t).unwrap();
        for col in out.x.columns() {
            let m = col.sum() / 50.0;
            let sd = (col.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 50.0).sqrt();
            assert!(m.abs() < 1e-12);
            assert!((sd - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn missing_values_are_an_ordering_error() {
        let schema = Schema::new(vec![FeatureSpec::continuous("a")]).unwrap();
        let t = CohortTable::new(schema, vec![vec![Some(1.0)], vec![None]], vec![0, 1]).unwrap();
        assert!(matches!(StandardScaler::fit(&t), Err(Error::Ordering(_))));
    }
}
