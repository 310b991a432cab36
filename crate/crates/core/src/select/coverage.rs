use serde::{Deserialize, Serialize};

use crate::dataset::CohortTable;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoverageFilterConfig {
    pub max_missing_fraction: f64,
    /// Counted on the raw cohort passed to the filter.
    pub min_documented_patients: usize,
    /// Features whose observed variance is at or below this are dropped.
    pub min_variance: f64,
}

impl Default for CoverageFilterConfig {
    fn default() -> Self {
        Self {
            max_missing_fraction: 0.20,
            min_documented_patients: 100,
            min_variance: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Missingness,
    LowDocumentation,
    ZeroVariance,
}

impl DropReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            DropReason::Missingness => "missingness",
            DropReason::LowDocumentation => "low_documentation",
            DropReason::ZeroVariance => "zero_variance",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageEntry {
    pub feature: String,
    pub missing_fraction: f64,
    pub documented: usize,
    pub variance: Option<f64>,
    pub kept: bool,
    /// Every rule the feature violated.
    pub reasons: Vec<DropReason>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub kept: Vec<String>,
    pub entries: Vec<CoverageEntry>,
}

pub fn coverage_filter(table: &CohortTable, cfg: &CoverageFilterConfig) -> Result<CoverageReport> {
    if !(0.0..=1.0).contains(&cfg.max_missing_fraction) || !(cfg.min_variance >= 0.0) {
        return Err(Error::Config("coverage thresholds out of range".into()));
    }
    let n = table.n_rows() as f64;
    let entries: Vec<CoverageEntry> = table
        .schema()
        .features
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let observed: Vec<f64> = table.column(j).flatten().collect();
            let documented = observed.len();
            let missing_fraction = 1.0 - documented as f64 / n;
            let variance = (documented > 0).then(|| {
                let m = observed.iter().sum::<f64>() / documented as f64;
                observed.iter().map(|v| (v - m).powi(2)).sum::<f64>() / documented as f64
            });
            let mut reasons = Vec::new();
            if missing_fraction > cfg.max_missing_fraction {
                reasons.push(DropReason::Missingness);
            }
            if documented < cfg.min_documented_patients {
                reasons.push(DropReason::LowDocumentation);
            }
            if variance.is_none_or(|v| v <= cfg.min_variance) {
                reasons.push(DropReason::ZeroVariance);
            }
            CoverageEntry {
                feature: spec.name.clone(),
                missing_fraction,
                documented,
                variance,
                kept: reasons.is_empty(),
                reasons,
            }
        })
        .collect();
    let kept: Vec<String> = entries.iter().filter(|e| e.kept).map(|e| e.feature.clone()).collect();
    if kept.is_empty() {
        return Err(Error::Selection("coverage filter dropped every feature".into()));
    }
    Ok(CoverageReport { kept, entries })
}
