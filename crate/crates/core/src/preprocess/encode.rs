use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{CohortTable, FeatureKind, FeatureSpec, Schema};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStat {
    pub code: i64,
    pub count: usize,
    /// Training outcome rate within the category.
    pub mean: f64,
}

/// Smoothed target encoding of one categorical or score feature:
/// category `c` maps to `(n_c·ȳ_c + α·ȳ) / (n_c + α)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetEncoder {
    pub feature: String,
    pub alpha: f64,
    pub global_mean: f64,
    /// Sorted by code.
    pub categories: Vec<CategoryStat>,
}

fn code(v: f64) -> i64 {
    v.round() as i64
}

fn smooth(count: f64, mean: f64, alpha: f64, prior: f64) -> f64 {
    if count + alpha == 0.0 {
        prior
    } else {
        (count * mean + alpha * prior) / (count + alpha)
    }
}

impl TargetEncoder {
    pub fn fit(train: &CohortTable, feature: &str, alpha: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(Error::Config(format!("smoothing α must be ≥ 0, got {alpha}")));
        }
        let col = train
            .schema()
            .index_of(feature)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{feature}`")))?;
        let kind = train.schema().features[col].kind;
        if !matches!(kind, FeatureKind::Categorical | FeatureKind::OrdinalScore) {
            return Err(Error::Config(format!(
                "target encoding applies to categorical or score features; `{feature}` is {kind:?}"
            )));
        }
        let labels = train.labels();
        let global_mean = train.event_rate();
        let mut stats: std::collections::BTreeMap<i64, (usize, f64)> = Default::default();
        for (v, &y) in train.column(col).zip(labels) {
            if let Some(v) = v {
                let e = stats.entry(code(v)).or_default();
                e.0 += 1;
                e.1 += y as f64;
            }
        }
        Ok(Self {
            feature: feature.to_string(),
            alpha,
            global_mean,
            categories: stats
                .into_iter()
                .map(|(code, (count, sum))| CategoryStat {
                    code,
                    count,
                    mean: sum / count as f64,
                })
                .collect(),
        })
    }

    /// Encoded value of a raw category value.
    pub fn encode_value(&self, v: f64) -> f64 {
        match self.categories.binary_search_by_key(&code(v), |c| c.code) {
            Ok(i) => {
                let c = &self.categories[i];
                smooth(c.count as f64, c.mean, self.alpha, self.global_mean)
            }
            Err(_) => {
                log::debug!("`{}`: unseen category {v} encoded as the prior", self.feature);
                self.global_mean
            }
        }
    }

    /// Replaces the feature's column with encoded values; the output schema
    /// declares the column continuous.
    pub fn encode(&self, table: &CohortTable) -> Result<CohortTable> {
        let col = table
            .schema()
            .index_of(&self.feature)
            .ok_or_else(|| Error::Schema(format!("unknown feature `{}`", self.feature)))?;
        let mut out = table.clone();
        for r in 0..table.n_rows() {
            if let Some(v) = table.value(r, col) {
                out.set_value(r, col, Some(self.encode_value(v)));
            }
        }
        let (schema, values, labels) = out.into_parts();
        CohortTable::from_flat(encoded_schema(&schema, col), values, labels)
    }
}

pub(crate) fn encoded_schema(schema: &Schema, col: usize) -> Schema {
    let mut schema = schema.clone();
    let name = schema.features[col].name.clone();
    schema.features[col] = FeatureSpec {
        unit: "encoded outcome rate".into(),
        ..FeatureSpec::continuous(name)
    };
    schema
}

/// Ordered target statistics: each row is encoded from the labels of rows
/// that precede it in a seeded random permutation, never its own label.
pub fn ordered_target_statistics(values: &[f64], labels: &[u8], alpha: f64, prior: f64, seed: u64) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.shuffle(&mut rng::seeded(seed));
    let mut running: std::collections::HashMap<i64, (f64, f64)> = Default::default();
    let mut out = vec![0.0; values.len()];
    for i in order {
        let e = running.entry(code(values[i])).or_default();
        let mean = if e.0 > 0.0 { e.1 / e.0 } else { prior };
        out[i] = smooth(e.0, mean, alpha, prior);
        e.0 += 1.0;
        e.1 += labels[i] as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(codes: &[f64], labels: &[u8]) -> CohortTable {
        let schema = Schema::new(vec![
            FeatureSpec::new("c", FeatureKind::Categorical).with_levels(["a", "b", "c", "d"]),
        ])
        .unwrap();
        CohortTable::new(
            schema,
            codes.iter().map(|&c| vec![Some(c)]).collect(),
            labels.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn zero_alpha_gives_the_raw_category_rate() {
        let t = table(&[0.0, 0.0, 1.0, 1.0, 1.0], &[1, 0, 1, 1, 0]);
        let enc = TargetEncoder::fit(&t, "c", 0.0).unwrap();
        assert_eq!(enc.encode_value(0.0), 0.5);
        assert!((enc.encode_value(1.0) - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn unseen_category_maps_to_prior() {
        let t = table(&[0.0, 1.0, 1.0], &[1, 0, 0]);
        let enc = TargetEncoder::fit(&t, "c", 3.0).unwrap();
        assert_eq!(enc.encode_value(3.0), enc.global_mean);
        let enc0 = TargetEncoder::fit(&t, "c", 0.0).unwrap();
        assert_eq!(enc0.encode_value(2.0), enc0.global_mean);
    }

    #[test]
    fn smoothing_arithmetic() {
        assert!((smooth(4.0, 0.5, 10.0, 0.2) - 0.2857142857142857).abs() < 1e-15);
    }

    #[test]
    fn rejects_continuous_features_and_negative_alpha() {
        let schema = Schema::new(vec![FeatureSpec::continuous("x")]).unwrap();
        let t = CohortTable::new(schema, vec![vec![Some(1.0)], vec![Some(2.0)]], vec![0, 1]).unwrap();
        assert!(matches!(TargetEncoder::fit(&t, "x", 1.0), Err(Error::Config(_))));
        let t = table(&[0.0, 1.0], &[0, 1]);
        assert!(matches!(TargetEncoder::fit(&t, "c", -1.0), Err(Error::Config(_))));
    }

    #[test]
    fn encoded_column_is_declared_continuous() {
        let t = table(&[0.0, 1.0, 2.0], &[0, 1, 1]);
        let enc = TargetEncoder::fit(&t, "c", 1.0).unwrap();
        let out = enc.encode(&t).unwrap();
        assert_eq!(out.schema().features[0].kind, FeatureKind::Continuous);
    }

    #[test]
    fn ordered_statistics_never_see_their_own_label() {
        // A single category: the first row in the permutation gets the prior.
        let values = vec![0.0; 6];
        let labels = [1, 1, 1, 1, 1, 1];
        let ts = ordered_target_statistics(&values, &labels, 1.0, 0.25, 4);
        let mut sorted = ts.clone();
        sorted.sort_by(f64::total_cmp);
        // (k·1 + 1·0.25)/(k + 1) for k = 0..5 preceding rows
        for (k, v) in sorted.iter().enumerate() {
            let expected = (k as f64 + 0.25) / (k as f64 + 1.0);
            assert!((v - expected).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn encoding_lies_between_category_rate_and_prior(
            rows in proptest::collection::vec((0u8..4, 0u8..2), 2..80),
            alpha in 0.0f64..50.0,
        ) {
            let codes: Vec<f64> = rows.iter().map(|r| r.0 as f64).collect();
            let labels: Vec<u8> = rows.iter().map(|r| r.1).collect();
            let enc = TargetEncoder::fit(&table(&codes, &labels), "c", alpha).unwrap();
            for c in &enc.categories {
                let v = enc.encode_value(c.code as f64);
                let lo = c.mean.min(enc.global_mean) - 1e-12;
                let hi = c.mean.max(enc.global_mean) + 1e-12;
                prop_assert!(v >= lo && v <= hi);
            }
        }
    }
}
