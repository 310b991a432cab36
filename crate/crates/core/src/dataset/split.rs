use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::CohortTable;
use crate::rng;
use crate::{Error, Result};

/// Disjoint train/test row indices, each sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Stratified train/test split.
///
/// The minority class contributes `round(count × fraction)` training rows and
/// the majority class fills the remainder of `round(n × fraction)`, so the
/// overall train size is the rounded fraction of the cohort.
pub fn stratified_split(table: &CohortTable, train_fraction: f64, seed: u64) -> Result<SplitIndex> {
    stratified_split_labels(table.labels(), train_fraction, seed)
}

pub(crate) fn stratified_split_labels(labels: &[u8], train_fraction: f64, seed: u64) -> Result<SplitIndex> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, &y) in labels.iter().enumerate() {
        by_class[y as usize].push(i);
    }
    for (class, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(Error::Stratification(format!(
                "class {class} has {} member(s); need at least 2",
                members.len()
            )));
        }
    }
    // Ties in class size make label 1 the minority.
    let minority = if by_class[1].len() <= by_class[0].len() { 1 } else { 0 };
    let majority = 1 - minority;
    let n = labels.len();
    let total_train = round_half_up(n as f64 * train_fraction);
    let clamp = |k: usize, m: usize| k.clamp(1, m - 1);
    let minority_train = clamp(
        round_half_up(by_class[minority].len() as f64 * train_fraction),
        by_class[minority].len(),
    );
    let majority_train = clamp(
        total_train.saturating_sub(minority_train),
        by_class[majority].len(),
    );

    let mut rng = rng::seeded(seed);
    let mut train_rows = Vec::with_capacity(total_train);
    let mut test_rows = Vec::with_capacity(n - total_train);
    for class in 0..2 {
        let k = if class == minority {
            minority_train
        } else {
            majority_train
        };
        let mut members = by_class[class].clone();
        members.shuffle(&mut rng);
        train_rows.extend_from_slice(&members[..k]);
        test_rows.extend_from_slice(&members[k..]);
    }
    train_rows.sort_unstable();
    test_rows.sort_unstable();
    Ok(SplitIndex {
        train_rows,
        test_rows,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(n: usize, positives: usize) -> Vec<u8> {
        (0..n).map(|i| u8::from(i < positives)).collect()
    }

    #[test]
    fn reference_cohort_sizes() {
        // 1301 patients at a 19.6% event rate: 255 deaths.
        let y = labels(1301, 255);
        let s = stratified_split_labels(&y, 0.7, 1).unwrap();
        assert_eq!(s.train_rows.len(), 911);
        assert_eq!(s.test_rows.len(), 390);
    }

    #[test]
    fn balanced_ten_rows() {
        let y = labels(10, 5);
        let s = stratified_split_labels(&y, 0.5, 3).unwrap();
        let pos_train = s.train_rows.iter().filter(|&&i| y[i] == 1).count();
        let pos_test = s.test_rows.iter().filter(|&&i| y[i] == 1).count();
        assert!((2..=3).contains(&pos_train));
        assert!((2..=3).contains(&pos_test));
    }

    #[test]
    fn deterministic_for_seed() {
        let y = labels(200, 40);
        assert_eq!(
            stratified_split_labels(&y, 0.7, 9).unwrap(),
            stratified_split_labels(&y, 0.7, 9).unwrap()
        );
        assert_ne!(
            stratified_split_labels(&y, 0.7, 9).unwrap(),
            stratified_split_labels(&y, 0.7, 10).unwrap()
        );
    }

    #[test]
    fn tiny_class_is_rejected() {
        let y = labels(10, 1);
        assert!(matches!(
            stratified_split_labels(&y, 0.7, 0),
            Err(Error::Stratification(_))
        ));
        assert!(matches!(
            stratified_split_labels(&labels(10, 5), 1.0, 0),
            Err(Error::Config(_))
        ));
    }

    proptest! {
        #[test]
        fn split_partitions_rows(n in 10usize..300, frac in 0.05f64..0.95, seed in any::<u64>(), pos_frac in 0.1f64..0.9) {
            let positives = ((n as f64 * pos_frac) as usize).clamp(2, n - 2);
            let y = labels(n, positives);
            let s = stratified_split_labels(&y, frac, seed).unwrap();
            let mut all: Vec<usize> = s.train_rows.iter().chain(&s.test_rows).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            // Class share of each part stays within one sample of the cohort share.
            let expected = positives as f64 / n as f64;
            for part in [&s.train_rows, &s.test_rows] {
                let pos = part.iter().filter(|&&i| y[i] == 1).count() as f64;
                prop_assert!((pos - expected * part.len() as f64).abs() <= 1.0 + 1e-9);
            }
        }
    }
}
