//! Evaluation: Mann–Whitney AUROC with stratified bootstrap intervals, ROC
//! points, threshold tuning on out-of-fold scores, confusion metrics and
//! Welch t-tests for cohort comparison tables.

mod auroc;
mod metrics;
mod threshold;
mod welch;

pub use auroc::{
    auroc, bootstrap_auroc_ci, bootstrap_aurocs, percentile_interval, quantile, roc_curve, ConfidenceInterval,
    RocPoint,
};
pub use metrics::{confusion_metrics, evaluate, write_metrics_csv, ConfusionCounts, MetricReport};
pub use threshold::{tune_threshold, ThresholdPolicy};
pub use welch::{
    compare_cohorts, ln_gamma, regularized_incomplete_beta, student_t_cdf, welch_t, write_comparison_csv,
    ComparisonRow, WelchResult,
};
