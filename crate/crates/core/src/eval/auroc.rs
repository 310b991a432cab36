use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};
use rand::Rng as _;

fn check_inputs(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::Config(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score".into()));
    }
    let n1 = labels.iter().filter(|&&y| y == 1).count();
    let n0 = labels.len() - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Undefined("AUROC needs both classes".into()));
    }
    Ok((n1, n0))
}

/// Mann–Whitney AUROC: `(concordant + tied / 2) / (n1 · n0)`.
pub fn auroc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n1, n0) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // twice the Mann–Whitney U, kept integral
    let mut u2: u64 = 0;
    let mut neg_below: u64 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            if labels[order[j]] == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        u2 += 2 * pos * neg_below + pos * neg;
        neg_below += neg;
        i = j;
    }
    Ok(u2 as f64 / (2 * n1 as u64 * n0 as u64) as f64)
}

/// Replicate AUROCs from class-stratified resampling with replacement.
/// Replicate `b` draws from its own stream derived from `(seed, b)`.
pub fn bootstrap_aurocs(scores: &[f64], labels: &[u8], n_boot: usize, seed: u64) -> Result<Vec<f64>> {
    check_inputs(scores, labels)?;
    let pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    let neg: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] != 1).collect();
    (0..n_boot)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::derived(seed, &[b as u64]);
            let mut s = Vec::with_capacity(labels.len());
            let mut y = Vec::with_capacity(labels.len());
            for (class, idx) in [(1u8, &pos), (0u8, &neg)] {
                for _ in 0..idx.len() {
                    s.push(scores[idx[r.random_range(0..idx.len())]]);
                    y.push(class);
                }
            }
            auroc(&s, &y)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub low: f64,
    pub high: f64,
}

/// Linear-interpolation quantile; `sorted` must be ascending and nonempty.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    crate::select::quantile_sorted(sorted, q)
}

/// Percentile interval at `level` over replicate values.
pub fn percentile_interval(replicates: &[f64], level: f64) -> ConfidenceInterval {
    let mut sorted = replicates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    ConfidenceInterval {
        low: quantile(&sorted, tail),
        high: quantile(&sorted, 1.0 - tail),
    }
}

/// 95% stratified percentile bootstrap interval for the AUROC.
pub fn bootstrap_auroc_ci(scores: &[f64], labels: &[u8], n_boot: usize, seed: u64) -> Result<ConfidenceInterval> {
    if n_boot == 0 {
        return Err(Error::Config("bootstrap needs at least one replicate".into()));
    }
    let reps = bootstrap_aurocs(scores, labels, n_boot, seed)?;
    Ok(percentile_interval(&reps, 0.95))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    pub threshold: f64,
}

/// ROC vertices for thresholds at each unique score, descending. The first
/// point is `(0, 0)` at `+inf`.
pub fn roc_curve(scores: &[f64], labels: &[u8]) -> Result<Vec<RocPoint>> {
    let (n1, n0) = check_inputs(scores, labels)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n0 as f64,
            tpr: tp as f64 / n1 as f64,
            threshold: s,
        });
    }
    Ok(points)
}
