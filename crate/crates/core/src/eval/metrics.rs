use std::io::Write;

use serde::{Deserialize, Serialize};

use super::auroc::{auroc, bootstrap_auroc_ci};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn at_threshold(scores: &[f64], labels: &[u8], threshold: f64) -> Self {
        let mut c = Self { tp: 0, fp: 0, tn: 0, fn_: 0 };
        for (&s, &y) in scores.iter().zip(labels) {
            match (y == 1, s >= threshold) {
                (true, true) => c.tp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fp += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Test-set metric battery. `None` marks a rate whose denominator is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub auroc: Option<f64>,
    pub auroc_ci_low: Option<f64>,
    pub auroc_ci_high: Option<f64>,
    pub threshold: f64,
    pub accuracy: Option<f64>,
    pub f1: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub ppv: Option<f64>,
    pub npv: Option<f64>,
    pub counts: ConfusionCounts,
}

impl MetricReport {
    pub fn from_counts(counts: ConfusionCounts, threshold: f64) -> Self {
        let ConfusionCounts { tp, fp, tn, fn_ } = counts;
        Self {
            auroc: None,
            auroc_ci_low: None,
            auroc_ci_high: None,
            threshold,
            accuracy: ratio(tp + tn, counts.total()),
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
            sensitivity: ratio(tp, tp + fn_),
            specificity: ratio(tn, tn + fp),
            ppv: ratio(tp, tp + fp),
            npv: ratio(tn, tn + fn_),
            counts,
        }
    }

    pub const CSV_HEADER: [&'static str; 15] = [
        "model",
        "auroc",
        "auroc_ci_low",
        "auroc_ci_high",
        "accuracy",
        "f1",
        "sensitivity",
        "specificity",
        "ppv",
        "npv",
        "threshold",
        "tp",
        "fp",
        "tn",
        "fn",
    ];

    pub fn csv_record(&self, model: &str) -> Vec<String> {
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_else(|| "NA".into());
        vec![
            model.to_string(),
            opt(self.auroc),
            opt(self.auroc_ci_low),
            opt(self.auroc_ci_high),
            opt(self.accuracy),
            opt(self.f1),
            opt(self.sensitivity),
            opt(self.specificity),
            opt(self.ppv),
            opt(self.npv),
            self.threshold.to_string(),
            self.counts.tp.to_string(),
            self.counts.fp.to_string(),
            self.counts.tn.to_string(),
            self.counts.fn_.to_string(),
        ]
    }
}

pub fn confusion_metrics(scores: &[f64], labels: &[u8], threshold: f64) -> MetricReport {
    MetricReport::from_counts(ConfusionCounts::at_threshold(scores, labels, threshold), threshold)
}

/// Confusion metrics plus AUROC and its bootstrap interval.
pub fn evaluate(scores: &[f64], labels: &[u8], threshold: f64, n_boot: usize, seed: u64) -> Result<MetricReport> {
    let mut report = confusion_metrics(scores, labels, threshold);
    report.auroc = Some(auroc(scores, labels)?);
    let ci = bootstrap_auroc_ci(scores, labels, n_boot, seed)?;
    report.auroc_ci_low = Some(ci.low);
    report.auroc_ci_high = Some(ci.high);
    Ok(report)
}

/// Writes one row per named report in the given order.
pub fn write_metrics_csv<W: Write>(writer: W, rows: &[(String, MetricReport)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(MetricReport::CSV_HEADER)?;
    for (name, report) in rows {
        w.write_record(report.csv_record(name))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_correct_gives_unit_rates() {
        let m = confusion_metrics(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1], 0.5);
        for r in [m.accuracy, m.f1, m.sensitivity, m.specificity, m.ppv, m.npv] {
            assert_eq!(r, Some(1.0));
        }
    }

    #[test]
    fn no_positives_leaves_sensitivity_undefined() {
        let m = confusion_metrics(&[0.1, 0.2, 0.3], &[0, 0, 0], 0.9);
        assert_eq!(m.specificity, Some(1.0));
        assert_eq!(m.sensitivity, None);
        assert_eq!(m.ppv, None);
    }
}
