use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A row is predicted positive when its score is `>= threshold`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    /// Maximize sensitivity + specificity − 1; ties go to the lower threshold.
    #[default]
    Youden,
    /// Largest threshold whose sensitivity is at least `min_sensitivity`.
    SensitivityFloor { min_sensitivity: f64 },
}

/// Midpoints between consecutive unique scores, ascending.
fn candidate_thresholds(scores: &[f64]) -> Vec<f64> {
    let mut u = scores.to_vec();
    u.sort_by(f64::total_cmp);
    u.dedup();
    if u.len() == 1 {
        return u;
    }
    u.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0).collect()
}

/// (sensitivity, specificity) at `t`, with undefined rates reported as 0.
pub(crate) fn rates_at(scores: &[f64], labels: &[u8], t: f64) -> (f64, f64) {
    let (mut tp, mut fneg, mut tn, mut fp) = (0usize, 0usize, 0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        match (y == 1, s >= t) {
            (true, true) => tp += 1,
            (true, false) => fneg += 1,
            (false, false) => tn += 1,
            (false, true) => fp += 1,
        }
    }
    let ratio = |a: usize, b: usize| if a + b == 0 { 0.0 } else { a as f64 / (a + b) as f64 };
    (ratio(tp, fneg), ratio(tn, fp))
}

pub fn tune_threshold(scores: &[f64], labels: &[u8], policy: ThresholdPolicy) -> Result<f64> {
    if scores.is_empty() || scores.len() != labels.len() {
        return Err(Error::Config("threshold tuning needs matched, nonempty scores and labels".into()));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let candidates = candidate_thresholds(scores);
    match policy {
        ThresholdPolicy::Youden => {
            let mut best = (f64::NEG_INFINITY, candidates[0]);
            for &t in &candidates {
                let (sens, spec) = rates_at(scores, labels, t);
                let j = sens + spec - 1.0;
                if j > best.0 {
                    best = (j, t);
                }
            }
            Ok(best.1)
        }
        ThresholdPolicy::SensitivityFloor { min_sensitivity } => {
            if !(0.0..=1.0).contains(&min_sensitivity) {
                return Err(Error::Config(format!("sensitivity floor {min_sensitivity} outside [0, 1]")));
            }
            let lowest = scores.iter().copied().fold(f64::INFINITY, f64::min);
            Ok(candidates
                .iter()
                .rev()
                .copied()
                .find(|&t| rates_at(scores, labels, t).0 >= min_sensitivity)
                .unwrap_or(lowest))
        }
    }
}
