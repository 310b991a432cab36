use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::dataset::{CohortTable, FeatureKind};
use crate::{Error, Result};

/// Plug-in mutual information (nats) between two discrete codings.
pub fn mutual_information_discrete(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Config(format!(
            "mutual information over vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Ok(0.0);
    }
    let n = a.len() as f64;
    let mut joint: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut pa: BTreeMap<usize, usize> = BTreeMap::new();
    let mut pb: BTreeMap<usize, usize> = BTreeMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((x, y)).or_default() += 1;
        *pa.entry(x).or_default() += 1;
        *pb.entry(y).or_default() += 1;
    }
    let mi: f64 = joint
        .iter()
        .map(|(&(x, y), &c)| {
            let c = c as f64;
            (c / n) * (c * n / (pa[&x] as f64 * pb[&y] as f64)).ln()
        })
        .sum();
    Ok(mi.max(0.0))
}

/// MI between a discretized feature and the binary outcome.
pub fn mutual_information(x: &[usize], y: &[u8]) -> Result<f64> {
    let y: Vec<usize> = y.iter().map(|&v| v as usize).collect();
    mutual_information_discrete(x, &y)
}

/// Quantile bin edges with coincident quantiles merged. A value `v` falls in
/// bin `#{cuts < v}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileBinner {
    pub cuts: Vec<f64>,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl QuantileBinner {
    pub fn fit(values: &[f64], n_bins: usize) -> Self {
        if values.is_empty() || n_bins < 2 {
            return Self { cuts: Vec::new() };
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let mut cuts: Vec<f64> = (1..n_bins)
            .map(|i| quantile_sorted(&sorted, i as f64 / n_bins as f64))
            .collect();
        cuts.dedup();
        Self { cuts }
    }

    pub fn bin(&self, v: f64) -> usize {
        self.cuts.partition_point(|&c| c < v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankConfig {
    pub n_bins: usize,
    /// MI (nats) at or below which a feature counts as uninformative.
    pub epsilon: f64,
}

impl Default for RankConfig {
    fn default() -> Self {
        Self {
            n_bins: 10,
            epsilon: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub mi: f64,
    /// 1-based position in the ranking.
    pub rank: usize,
    /// Bin cut points; empty for features used with their raw codes.
    pub cuts: Vec<f64>,
    pub near_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiRanking {
    pub entries: Vec<RankedFeature>,
    pub selected: Vec<String>,
    pub n_bins: usize,
    pub epsilon: f64,
}

impl MiRanking {
    pub fn mi(&self, feature: &str) -> Option<f64> {
        self.entries.iter().find(|e| e.feature == feature).map(|e| e.mi)
    }
}

/// Discretizes one column over its observed rows.
fn discretize(kind: FeatureKind, values: &[f64], n_bins: usize) -> (Vec<usize>, Vec<f64>) {
    match kind {
        FeatureKind::Binary | FeatureKind::Categorical => {
            let codes: BTreeMap<i64, usize> = values
                .iter()
                .map(|v| v.round() as i64)
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .enumerate()
                .map(|(i, c)| (c, i))
                .collect();
            (values.iter().map(|v| codes[&(v.round() as i64)]).collect(), Vec::new())
        }
        FeatureKind::Continuous | FeatureKind::OrdinalScore => {
            let binner = QuantileBinner::fit(values, n_bins);
            (values.iter().map(|&v| binner.bin(v)).collect(), binner.cuts)
        }
    }
}

/// Ranks every feature of `table` by MI with the label, computed over rows
/// where the feature is observed. Continuous features use quantile bins
/// fitted on `table`. Ties are broken alphabetically.
pub fn rank_features(table: &CohortTable, cfg: &RankConfig, top_k: usize) -> Result<MiRanking> {
    let mut entries = table
        .schema()
        .features
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let (values, labels): (Vec<f64>, Vec<u8>) = table
                .column(j)
                .zip(table.labels())
                .filter_map(|(v, &y)| v.map(|v| (v, y)))
                .unzip();
            let (codes, cuts) = discretize(spec.kind, &values, cfg.n_bins);
            let mi = mutual_information(&codes, &labels)?;
            Ok(RankedFeature {
                feature: spec.name.clone(),
                mi,
                rank: 0,
                cuts,
                near_zero: mi <= cfg.epsilon,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    entries.sort_by(|a, b| b.mi.total_cmp(&a.mi).then_with(|| a.feature.cmp(&b.feature)));
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    let informative: Vec<&RankedFeature> = entries.iter().filter(|e| !e.near_zero).collect();
    if top_k > informative.len() {
        log::warn!(
            "top_k = {top_k} exceeds the {} informative features; keeping all of them",
            informative.len()
        );
    }
    let selected = informative
        .iter()
        .take(top_k)
        .map(|e| e.feature.clone())
        .collect();
    Ok(MiRanking {
        entries,
        selected,
        n_bins: cfg.n_bins,
        epsilon: cfg.epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_feature_has_zero_mi() {
        let x = vec![0usize; 20];
        let y: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        assert_eq!(mutual_information(&x, &y).unwrap(), 0.0);
    }

    #[test]
    fn identical_balanced_binary_is_ln2() {
        let y: Vec<u8> = (0..100).map(|i| (i % 2) as u8).collect();
        let x: Vec<usize> = y.iter().map(|&v| v as usize).collect();
        assert!((mutual_information(&x, &y).unwrap() - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_table_by_hand() {
        // counts {(0,0):4, (0,1):1, (1,0):1, (1,1):4}, n = 10, all marginals 1/2
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (a, b, c) in [(0, 0u8, 4), (0, 1, 1), (1, 0, 1), (1, 1, 4)] {
            for _ in 0..c {
                x.push(a);
                y.push(b);
            }
        }
        let expected = 2.0 * 0.4 * (0.4f64 / 0.25).ln() + 2.0 * 0.1 * (0.1f64 / 0.25).ln();
        assert!((mutual_information(&x, &y).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_an_error() {
        assert!(mutual_information(&[0, 1], &[0]).is_err());
    }

    #[test]
    fn binner_merges_coincident_quantiles() {
        let values: Vec<f64> = (0..100).map(|i| if i < 75 { 0.0 } else { 1.0 }).collect();
        let b = QuantileBinner::fit(&values, 10);
        assert_eq!(b.cuts, vec![0.0, 1.0]);
        assert_eq!(b.bin(0.0), 0);
        assert_eq!(b.bin(1.0), 1);
        let dense = QuantileBinner::fit(&(0..1000).map(f64::from).collect::<Vec<_>>(), 10);
        assert_eq!(dense.cuts.len(), 9);
    }

    proptest! {
        #[test]
        fn mi_is_symmetric_and_nonnegative(
            pairs in proptest::collection::vec((0usize..5, 0usize..4), 1..200)
        ) {
            let (a, b): (Vec<usize>, Vec<usize>) = pairs.into_iter().unzip();
            let ab = mutual_information_discrete(&a, &b).unwrap();
            let ba = mutual_information_discrete(&b, &a).unwrap();
            prop_assert!(ab >= 0.0);
            prop_assert!((ab - ba).abs() < 1e-12);
        }

        #[test]
        fn mi_ignores_bin_relabeling(
            pairs in proptest::collection::vec((0usize..6, 0u8..2), 1..200),
            perm in Just(vec![4usize, 0, 5, 2, 1, 3]).prop_shuffle(),
        ) {
            let (x, y): (Vec<usize>, Vec<u8>) = pairs.into_iter().unzip();
            let relabeled: Vec<usize> = x.iter().map(|&v| perm[v] * 7 + 100).collect();
            let a = mutual_information(&x, &y).unwrap();
            let b = mutual_information(&relabeled, &y).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
