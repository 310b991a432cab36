//! Cohort data model, CSV ingestion, stratified splitting, per-class
//! summaries and synthetic cohort generation.

mod io;
pub mod reference;
pub(crate) mod split;
pub(crate) mod summary;
mod synth;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use io::{load_cohort, read_cohort, save_cohort, write_cohort};
pub use split::{stratified_split, SplitIndex};
pub use summary::{summarize, CohortSummary, FeatureMoments, GroupSummary};
pub use synth::{synth_cohort, SynthConfig};

/// Column name holding the 30-day mortality outcome in cohort CSV files.
pub const LABEL_COLUMN: &str = "label";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
    OrdinalScore,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    pub kind: FeatureKind,
    #[serde(default)]
    pub unit: String,
    /// Physiologic lower bound; generated values never fall below it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<f64>,
    /// Level names of a categorical feature, in code order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<String>,
}

impl FeatureSpec {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Continuous)
    }

    pub fn binary(name: impl Into<String>) -> Self {
        Self::new(name, FeatureKind::Binary)
    }

    pub fn new(name: impl Into<String>, kind: FeatureKind) -> Self {
        Self {
            name: name.into(),
            kind,
            unit: String::new(),
            lower: None,
            upper: None,
            levels: Vec::new(),
        }
    }

    pub fn with_bounds(mut self, lower: f64, upper: f64) -> Self {
        self.lower = Some(lower);
        self.upper = Some(upper);
        self
    }

    pub fn with_levels<S: Into<String>>(mut self, levels: impl IntoIterator<Item = S>) -> Self {
        self.levels = levels.into_iter().map(Into::into).collect();
        self
    }

    /// Clamps `value` into the declared bounds.
    pub fn clamp(&self, value: f64) -> f64 {
        let v = self.lower.map_or(value, |lo| value.max(lo));
        self.upper.map_or(v, |hi| v.min(hi))
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower.is_none_or(|lo| value >= lo) && self.upper.is_none_or(|hi| value <= hi)
    }
}

/// Ordered list of feature specifications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub features: Vec<FeatureSpec>,
}

impl Schema {
    pub fn new(features: Vec<FeatureSpec>) -> Result<Self> {
        let schema = Self { features };
        schema.validate()?;
        Ok(schema)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        for f in &self.features {
            if f.name.is_empty() || f.name == LABEL_COLUMN {
                return Err(Error::Schema(format!("invalid feature name `{}`", f.name)));
            }
            if !seen.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature `{}`", f.name)));
            }
            match f.kind {
                FeatureKind::OrdinalScore if f.lower.is_none() || f.upper.is_none() => {
                    return Err(Error::Schema(format!(
                        "ordinal score `{}` needs a declared range",
                        f.name
                    )));
                }
                FeatureKind::Categorical if f.levels.is_empty() => {
                    return Err(Error::Schema(format!(
                        "categorical feature `{}` declares no levels",
                        f.name
                    )));
                }
                _ => {}
            }
            if let (Some(lo), Some(hi)) = (f.lower, f.upper) {
                if !(lo <= hi) {
                    return Err(Error::Schema(format!("empty range on `{}`", f.name)));
                }
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let schema: Schema = serde_json::from_str(text)?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The 17-feature default schema shipped as `data/schema_table1.json`.
    pub fn table1() -> Self {
        Self::from_json(reference::SCHEMA_TABLE1_JSON).expect("shipped schema is valid")
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }
}

/// `n × d` feature values with explicit missingness, plus the binary outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortTable {
    schema: Schema,
    values: Vec<Option<f64>>,
    labels: Vec<u8>,
}

impl CohortTable {
    pub fn new(schema: Schema, rows: Vec<Vec<Option<f64>>>, labels: Vec<u8>) -> Result<Self> {
        let d = schema.len();
        if let Some((i, _)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(Error::Schema(format!(
                "row {i} has {} values, schema has {d}",
                rows[i].len()
            )));
        }
        Self::from_flat(schema, rows.into_iter().flatten().collect(), labels)
    }

    /// Builds a table from row-major values.
    pub fn from_flat(schema: Schema, values: Vec<Option<f64>>, labels: Vec<u8>) -> Result<Self> {
        schema.validate()?;
        let d = schema.len();
        if labels.is_empty() {
            return Err(Error::Schema("cohort has no rows".into()));
        }
        if values.len() != labels.len() * d {
            return Err(Error::Schema(format!(
                "{} values do not form {} rows of {d}",
                values.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y > 1) {
            return Err(Error::Schema(format!("label {bad} is not binary")));
        }
        Ok(Self {
            schema,
            values,
            labels,
        })
    }

    /// Builds a complete table from a dense matrix.
    pub fn from_dense(schema: Schema, x: &Array2<f64>, labels: Vec<u8>) -> Result<Self> {
        if x.ncols() != schema.len() {
            return Err(Error::Schema(format!(
                "matrix has {} columns, schema has {}",
                x.ncols(),
                schema.len()
            )));
        }
        Self::from_flat(schema, x.iter().map(|&v| Some(v)).collect(), labels)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn n_features(&self) -> usize {
        self.schema.len()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn value(&self, row: usize, col: usize) -> Option<f64> {
        self.values[row * self.n_features() + col]
    }

    pub fn row(&self, row: usize) -> &[Option<f64>] {
        let d = self.n_features();
        &self.values[row * d..(row + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[Option<f64>]> {
        self.values.chunks(self.n_features().max(1)).take(self.n_rows())
    }

    pub fn column(&self, col: usize) -> impl Iterator<Item = Option<f64>> + '_ {
        let d = self.n_features();
        (0..self.n_rows()).map(move |r| self.values[r * d + col])
    }

    pub fn set_value(&mut self, row: usize, col: usize, value: Option<f64>) {
        let d = self.n_features();
        self.values[row * d + col] = value;
    }

    pub fn set_label(&mut self, row: usize, label: u8) {
        assert!(label <= 1, "labels are binary");
        self.labels[row] = label;
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    pub fn is_complete(&self) -> bool {
        self.values.iter().all(Option::is_some)
    }

    pub fn event_rate(&self) -> f64 {
        self.labels.iter().map(|&y| y as f64).sum::<f64>() / self.n_rows() as f64
    }

    /// Rows `indices` in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let mut values = Vec::with_capacity(indices.len() * self.n_features());
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::from_flat(self.schema.clone(), values, labels)
    }

    /// Keeps only the named features, in the given order.
    pub fn project(&self, names: &[String]) -> Result<Self> {
        let cols = names
            .iter()
            .map(|n| {
                self.schema
                    .index_of(n)
                    .ok_or_else(|| Error::Schema(format!("unknown feature `{n}`")))
            })
            .collect::<Result<Vec<_>>>()?;
        let schema = Schema::new(
            cols.iter()
                .map(|&c| self.schema.features[c].clone())
                .collect(),
        )?;
        let values = self
            .rows()
            .flat_map(|r| cols.iter().map(move |&c| r[c]))
            .collect();
        Self::from_flat(schema, values, self.labels.clone())
    }

    pub fn without_feature(&self, name: &str) -> Result<Self> {
        let names: Vec<String> = self
            .schema
            .names()
            .into_iter()
            .filter(|n| n != name)
            .collect();
        if names.len() == self.n_features() {
            return Err(Error::Schema(format!("unknown feature `{name}`")));
        }
        self.project(&names)
    }

    /// Dense copy; fails on any missing entry.
    pub fn to_dense(&self) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((self.n_rows(), self.n_features()));
        for (r, row) in self.rows().enumerate() {
            for (c, v) in row.iter().enumerate() {
                out[[r, c]] = v.ok_or_else(|| {
                    Error::Ordering(format!(
                        "missing value at row {r}, feature `{}`",
                        self.schema.features[c].name
                    ))
                })?;
            }
        }
        Ok(out)
    }

    pub(crate) fn into_parts(self) -> (Schema, Vec<Option<f64>>, Vec<u8>) {
        (self.schema, self.values, self.labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema2() -> Schema {
        Schema::new(vec![FeatureSpec::continuous("a"), FeatureSpec::binary("b")]).unwrap()
    }

    #[test]
    fn table1_schema_has_seventeen_features() {
        let s = Schema::table1();
        assert_eq!(s.len(), 17);
        assert_eq!(
            s.features
                .iter()
                .filter(|f| f.kind == FeatureKind::Binary)
                .count(),
            2
        );
    }

    #[test]
    fn schema_rejects_duplicates_and_unranged_scores() {
        let dup = Schema::new(vec![FeatureSpec::continuous("a"), FeatureSpec::continuous("a")]);
        assert!(matches!(dup, Err(Error::Schema(_))));
        let ord = Schema::new(vec![FeatureSpec::new("s", FeatureKind::OrdinalScore)]);
        assert!(matches!(ord, Err(Error::Schema(_))));
    }

    #[test]
    fn table_rejects_ragged_rows_and_bad_labels() {
        let ragged = CohortTable::new(schema2(), vec![vec![Some(1.0)]], vec![0]);
        assert!(ragged.is_err());
        let label = CohortTable::new(schema2(), vec![vec![Some(1.0), Some(0.0)]], vec![2]);
        assert!(label.is_err());
        let empty = CohortTable::new(schema2(), vec![], vec![]);
        assert!(empty.is_err());
    }

    #[test]
    fn project_and_subset() {
        let t = CohortTable::new(
            schema2(),
            vec![
                vec![Some(1.0), Some(0.0)],
                vec![None, Some(1.0)],
                vec![Some(3.0), Some(1.0)],
            ],
            vec![0, 1, 1],
        )
        .unwrap();
        let p = t.project(&["b".into()]).unwrap();
        assert_eq!(p.n_features(), 1);
        assert_eq!(p.value(1, 0), Some(1.0));
        let s = t.subset(&[2, 0]).unwrap();
        assert_eq!(s.labels(), &[1, 0]);
        assert_eq!(s.value(0, 0), Some(3.0));
        assert!(t.to_dense().is_err());
        assert!(s.to_dense().is_ok());
        assert_eq!(t.missing_count(), 1);
    }
}
