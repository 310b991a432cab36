use serde::{Deserialize, Serialize};

use super::CohortTable;

/// Moments of one feature within one group. `None` marks an undefined moment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMoments {
    pub mean: Option<f64>,
    /// Sample standard deviation (n − 1 denominator).
    pub sd: Option<f64>,
    pub missing_fraction: f64,
    /// Rows with an observed value.
    pub documented: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    /// Outcome class, or `None` for the whole cohort.
    pub label: Option<u8>,
    pub n_rows: usize,
    pub features: Vec<FeatureMoments>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortSummary {
    pub feature_names: Vec<String>,
    pub groups: Vec<GroupSummary>,
    pub event_rate: f64,
}

impl CohortSummary {
    pub fn group(&self, label: u8) -> Option<&GroupSummary> {
        self.groups.iter().find(|g| g.label == Some(label))
    }

    pub fn moments(&self, label: u8, feature: &str) -> Option<&FeatureMoments> {
        let idx = self.feature_names.iter().position(|n| n == feature)?;
        self.group(label).map(|g| &g.features[idx])
    }
}

pub(crate) fn moments<I: IntoIterator<Item = Option<f64>>>(values: I) -> FeatureMoments {
    let mut n_total = 0usize;
    let observed: Vec<f64> = values
        .into_iter()
        .inspect(|_| n_total += 1)
        .flatten()
        .collect();
    let n = observed.len();
    let mean = (n > 0).then(|| observed.iter().sum::<f64>() / n as f64);
    let sd = mean.filter(|_| n > 1).map(|m| {
        (observed.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    });
    FeatureMoments {
        mean,
        sd,
        missing_fraction: if n_total == 0 {
            0.0
        } else {
            (n_total - n) as f64 / n_total as f64
        },
        documented: n,
    }
}

/// Per-feature moments over observed entries, either pooled or per class.
pub fn summarize(table: &CohortTable, by_label: bool) -> CohortSummary {
    let groups: Vec<Option<u8>> = if by_label {
        vec![Some(0), Some(1)]
    } else {
        vec![None]
    };
    let groups = groups
        .into_iter()
        .map(|label| {
            let rows: Vec<usize> = (0..table.n_rows())
                .filter(|&r| label.is_none_or(|l| table.labels()[r] == l))
                .collect();
            GroupSummary {
                label,
                n_rows: rows.len(),
                features: (0..table.n_features())
                    .map(|c| moments(rows.iter().map(|&r| table.value(r, c))))
                    .collect(),
            }
        })
        .collect();
    CohortSummary {
        feature_names: table.schema().names(),
        groups,
        event_rate: table.event_rate(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FeatureSpec, Schema};

    #[test]
    fn two_point_column() {
        let m = moments([Some(2.0), Some(4.0)]);
        assert_eq!(m.mean, Some(3.0));
        assert!((m.sd.unwrap() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(m.documented, 2);
    }

    #[test]
    fn all_missing_column_is_undefined() {
        let m = moments([None, None, None]);
        assert_eq!(m.documented, 0);
        assert_eq!(m.mean, None);
        assert_eq!(m.sd, None);
        assert_eq!(m.missing_fraction, 1.0);
    }

    #[test]
    fn per_class_summary() {
        let schema = Schema::new(vec![FeatureSpec::continuous("x")]).unwrap();
        let t = CohortTable::new(
            schema,
            vec![vec![Some(1.0)], vec![Some(3.0)], vec![Some(10.0)], vec![None]],
            vec![0, 0, 1, 1],
        )
        .unwrap();
        let s = summarize(&t, true);
        assert_eq!(s.moments(0, "x").unwrap().mean, Some(2.0));
        let m1 = s.moments(1, "x").unwrap();
        assert_eq!(m1.mean, Some(10.0));
        assert_eq!(m1.sd, None);
        assert_eq!(m1.missing_fraction, 0.5);
        assert_eq!(s.event_rate, 0.5);
        assert_eq!(summarize(&t, false).groups.len(), 1);
    }
}
