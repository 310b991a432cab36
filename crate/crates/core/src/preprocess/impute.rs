use serde::{Deserialize, Serialize};

use crate::dataset::{CohortTable, FeatureKind};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    /// Root-mean-square difference of z-scored values over the dimensions
    /// observed in both rows.
    EuclideanObservedDims,
}

/// K-nearest-neighbour imputer over a frozen snapshot of training rows.
///
/// A missing entry is replaced by the average of that feature over the `k`
/// nearest training rows that observe it. Binary and categorical features use
/// the neighbours' majority value (ties to the smaller code) so that imputed
/// values stay in the feature's support. Neighbours at equal distance are
/// ordered by training row index. Fewer than `k` eligible neighbours use all
/// of them; none at all falls back to the training mean (or mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnImputer {
    pub k: usize,
    pub distance: DistanceKind,
    feature_names: Vec<String>,
    kinds: Vec<FeatureKind>,
    reference: Vec<Option<f64>>,
    n_reference: usize,
    centers: Vec<f64>,
    scales: Vec<f64>,
    /// Training mean per feature (mode for binary/categorical features).
    pub fallback_means: Vec<f64>,
}

fn is_discrete(kind: FeatureKind) -> bool {
    matches!(kind, FeatureKind::Binary | FeatureKind::Categorical)
}

fn mode(values: impl Iterator<Item = f64>) -> Option<f64> {
    let mut counts: Vec<(f64, usize)> = Vec::new();
    for v in values {
        match counts.iter_mut().find(|(c, _)| *c == v) {
            Some((_, n)) => *n += 1,
            None => counts.push((v, 1)),
        }
    }
    counts
        .into_iter()
        .max_by(|a, b| a.1.cmp(&b.1).then(b.0.total_cmp(&a.0)))
        .map(|(v, _)| v)
}

impl KnnImputer {
    pub fn fit(train: &CohortTable, k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::Config("KNN imputation needs k ≥ 1".into()));
        }
        let d = train.n_features();
        let schema = train.schema();
        let mut centers = vec![0.0; d];
        let mut scales = vec![1.0; d];
        let mut fallback_means = vec![0.0; d];
        for (j, spec) in schema.features.iter().enumerate() {
            let observed: Vec<f64> = train.column(j).flatten().collect();
            if observed.is_empty() {
                return Err(Error::Selection(format!(
                    "feature `{}` has no observed training values",
                    spec.name
                )));
            }
            let n = observed.len() as f64;
            let mean = observed.iter().sum::<f64>() / n;
            let sd = (observed.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            centers[j] = mean;
            scales[j] = if sd > 0.0 { sd } else { 1.0 };
            fallback_means[j] = if is_discrete(spec.kind) {
                mode(observed.iter().copied()).expect("non-empty")
            } else {
                mean
            };
        }
        Ok(Self {
            k,
            distance: DistanceKind::EuclideanObservedDims,
            feature_names: schema.names(),
            kinds: schema.features.iter().map(|f| f.kind).collect(),
            reference: train.rows().flatten().copied().collect(),
            n_reference: train.n_rows(),
            centers,
            scales,
            fallback_means,
        })
    }

    pub fn n_reference(&self) -> usize {
        self.n_reference
    }

    fn reference_row(&self, i: usize) -> &[Option<f64>] {
        let d = self.feature_names.len();
        &self.reference[i * d..(i + 1) * d]
    }

    /// Distance between a query row and training row `i`, or `None` when the
    /// two rows share no observed dimension.
    fn distance(&self, query: &[Option<f64>], i: usize) -> Option<f64> {
        let mut sum = 0.0;
        let mut shared = 0usize;
        for (j, (q, r)) in query.iter().zip(self.reference_row(i)).enumerate() {
            if let (Some(q), Some(r)) = (q, r) {
                let diff = (q - r) / self.scales[j];
                sum += diff * diff;
                shared += 1;
            }
        }
        (shared > 0).then(|| (sum / shared as f64).sqrt())
    }

    /// Fills the missing entries of one row.
    pub fn impute_row(&self, row: &[Option<f64>]) -> Vec<f64> {
        if row.iter().all(Option::is_some) {
            return row.iter().map(|v| v.unwrap()).collect();
        }
        let distances: Vec<Option<f64>> = (0..self.n_reference).map(|i| self.distance(row, i)).collect();
        row.iter()
            .enumerate()
            .map(|(j, v)| match v {
                Some(v) => *v,
                None => self.impute_entry(j, &distances),
            })
            .collect()
    }

    fn impute_entry(&self, j: usize, distances: &[Option<f64>]) -> f64 {
        let d = self.feature_names.len();
        let mut eligible: Vec<(f64, usize)> = distances
            .iter()
            .enumerate()
            .filter_map(|(i, dist)| {
                let dist = (*dist)?;
                self.reference[i * d + j].map(|_| (dist, i))
            })
            .collect();
        if eligible.is_empty() {
            return self.fallback_means[j];
        }
        let order = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        let k = self.k.min(eligible.len());
        if k < eligible.len() {
            eligible.select_nth_unstable_by(k - 1, order);
            eligible.truncate(k);
        }
        eligible.sort_unstable_by(order);
        let values = eligible.iter().map(|&(_, i)| self.reference[i * d + j].unwrap());
        if is_discrete(self.kinds[j]) {
            mode(values).expect("non-empty")
        } else {
            values.sum::<f64>() / k as f64
        }
    }

    pub fn impute(&self, table: &CohortTable) -> Result<CohortTable> {
        if table.schema().names() != self.feature_names {
            return Err(Error::Schema("imputer applied to a different feature set".into()));
        }
        let values = table
            .rows()
            .flat_map(|row| self.impute_row(row).into_iter().map(Some))
            .collect();
        CohortTable::from_flat(table.schema().clone(), values, table.labels().to_vec())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSpec, Schema};

    fn table(rows: Vec<Vec<Option<f64>>>) -> CohortTable {
        let d = rows[0].len();
        let schema = Schema::new((0..d).map(|i| FeatureSpec::continuous(format!("f{i}"))).collect()).unwrap();
        let n = rows.len();
        CohortTable::new(schema, rows, (0..n).map(|i| (i % 2) as u8).collect()).unwrap()
    }

    #[test]
    fn nearest_row_supplies_the_value() {
        let t = table(vec![
            vec![Some(1.0), Some(2.0)],
            vec![Some(1.0), None],
            vec![Some(5.0), Some(6.0)],
        ]);
        let imp = KnnImputer::fit(&t, 1).unwrap();
        let out = imp.impute(&t).unwrap();
        assert_eq!(out.value(1, 1), Some(2.0));
    }

    #[test]
    fn k_larger_than_eligible_uses_all_neighbours() {
        let t = table(vec![
            vec![Some(1.0), Some(2.0)],
            vec![Some(1.0), None],
            vec![Some(5.0), Some(6.0)],
        ]);
        let imp = KnnImputer::fit(&t, 10).unwrap();
        assert_eq!(imp.impute(&t).unwrap().value(1, 1), Some(4.0));
    }

    #[test]
    fn complete_table_is_unchanged_and_stored_verbatim() {
        let t = table(vec![vec![Some(1.0), Some(2.0)], vec![Some(3.0), Some(4.0)]]);
        let imp = KnnImputer::fit(&t, 5).unwrap();
        assert_eq!(imp.n_reference(), 2);
        assert_eq!(imp.reference_row(1), t.row(1));
        assert_eq!(imp.impute(&t).unwrap(), t);
    }

    #[test]
    fn single_observation_sets_the_fallback() {
        let t = table(vec![
            vec![Some(1.0), None],
            vec![Some(2.0), Some(7.5)],
            vec![Some(3.0), None],
        ]);
        let imp = KnnImputer::fit(&t, 3).unwrap();
        assert_eq!(imp.fallback_means[1], 7.5);
    }

    #[test]
    fn no_shared_dimension_falls_back_to_mean() {
        let t = table(vec![
            vec![Some(1.0), None],
            vec![None, Some(4.0)],
            vec![None, Some(8.0)],
        ]);
        let imp = KnnImputer::fit(&t, 1).unwrap();
        // Row 0 shares no observed dimension with rows 1-2.
        assert_eq!(imp.impute(&t).unwrap().value(0, 1), Some(6.0));
    }

    #[test]
    fn zero_k_is_a_config_error() {
        let t = table(vec![vec![Some(1.0)], vec![Some(2.0)]]);
        assert!(matches!(KnnImputer::fit(&t, 0), Err(Error::Config(_))));
    }

    #[test]
    fn binary_features_take_the_majority() {
        let schema = Schema::new(vec![FeatureSpec::continuous("x"), FeatureSpec::binary("b")]).unwrap();
        let rows = vec![
            vec![Some(0.0), Some(1.0)],
            vec![Some(0.1), Some(1.0)],
            vec![Some(0.2), Some(0.0)],
            vec![Some(9.0), Some(0.0)],
            vec![Some(0.05), None],
        ];
        let t = CohortTable::new(schema, rows, vec![0, 1, 0, 1, 0]).unwrap();
        let out = KnnImputer::fit(&t, 3).unwrap().impute(&t).unwrap();
        assert_eq!(out.value(4, 1), Some(1.0));
    }
}
