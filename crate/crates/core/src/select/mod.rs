//! Two-stage feature selection: coverage/variance filtering followed by
//! mutual-information ranking against the outcome.

mod coverage;
mod mi;

pub use coverage::{coverage_filter, CoverageEntry, CoverageFilterConfig, CoverageReport, DropReason};
pub use mi::{
    mutual_information, mutual_information_discrete, quantile_sorted, rank_features, MiRanking, QuantileBinner, RankConfig,
    RankedFeature,
};

use std::io::Write;

use crate::Result;

/// Writes the selection report as CSV: `feature,mi,status,reason`.
pub fn write_selection_report<W: Write>(writer: W, coverage: &CoverageReport, ranking: &MiRanking) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["feature", "mi", "status", "reason"])?;
    for entry in &coverage.entries {
        let ranked = ranking.entries.iter().find(|r| r.feature == entry.feature);
        let (status, reason) = if !entry.kept {
            (
                "dropped",
                entry
                    .reasons
                    .iter()
                    .map(|r| r.as_str())
                    .collect::<Vec<_>>()
                    .join(";"),
            )
        } else if ranking.selected.contains(&entry.feature) {
            ("kept", String::new())
        } else if ranked.is_some_and(|r| r.near_zero) {
            ("dropped", "near_zero_mi".to_string())
        } else {
            ("dropped", "below_top_k".to_string())
        };
        let mi = ranked.map(|r| r.mi.to_string()).unwrap_or_default();
        w.write_record([entry.feature.as_str(), mi.as_str(), status, reason.as_str()])?;
    }
    w.flush()?;
    Ok(())
}
