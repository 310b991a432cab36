//! Published cohort statistics used as defaults and as test anchors.
//!
//! Values are mean (SD) per group for the 17 default features, in schema
//! order. Binary features carry prevalence as the mean.

use super::summary::{CohortSummary, FeatureMoments, GroupSummary};

pub(crate) const SCHEMA_TABLE1_JSON: &str = include_str!("../../data/schema_table1.json");

/// Overall 30-day event rate of the reference cohort.
pub const EVENT_RATE: f64 = 0.196;

pub const COHORT_SIZE: usize = 1301;
pub const TRAIN_SIZE: usize = 911;
pub const TEST_SIZE: usize = 390;

/// One feature's statistics in two groups.
#[derive(Debug, Clone, Copy)]
pub struct GroupedMoments {
    pub feature: &'static str,
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
}

const fn gm(feature: &'static str, mean_a: f64, sd_a: f64, mean_b: f64, sd_b: f64) -> GroupedMoments {
    GroupedMoments {
        feature,
        mean_a,
        sd_a,
        mean_b,
        sd_b,
    }
}

/// Survivors (a) vs non-survivors (b).
pub const SURVIVAL_MOMENTS: [GroupedMoments; 17] = [
    gm("bun", 20.71, 13.50, 40.40, 32.81),
    gm("richmond_ras", -0.90, 1.13, -2.50, 1.68),
    gm("ptt", 34.87, 13.43, 47.19, 24.01),
    gm("phosphorous", 3.39, 0.88, 4.12, 1.57),
    gm("total_bilirubin", 1.21, 1.09, 2.78, 5.82),
    gm("anion_gap", 12.67, 3.07, 15.33, 4.42),
    gm("differential_lymphs", 14.34, 6.83, 9.66, 6.33),
    gm("braden_nutrition", 2.44, 0.43, 2.01, 0.40),
    gm("braden_moisture", 3.59, 0.38, 3.25, 0.42),
    gm("respiratory_rate_set", 17.90, 2.98, 20.49, 4.95),
    gm("jh_hlm_mobility", 2.39, 0.51, 2.00, 0.30),
    gm("peak_inspiratory_pressure", 19.09, 3.74, 21.70, 5.98),
    gm("po2", 159.96, 68.61, 99.30, 43.49),
    gm("invasive_ventilation", 0.47, 0.50, 0.55, 0.50),
    gm("cefepime", 0.24, 0.42, 0.63, 0.48),
    gm("age", 69.64, 9.21, 70.54, 10.11),
    gm("charlson_index", 4.24, 1.70, 4.59, 1.44),
];

/// Training (a, n=911) vs test (b, n=390) with the reported two-sided p-value.
#[allow(clippy::approx_constant)]
pub const SPLIT_MOMENTS: [(GroupedMoments, Option<f64>); 17] = [
    (gm("richmond_ras", -1.08, 1.30, -1.01, 1.30), Some(0.352)),
    (gm("bun", 22.90, 17.85, 20.03, 11.82), None),
    (gm("ptt", 36.24, 15.45, 36.44, 14.60), Some(0.827)),
    (gm("po2", 153.23, 68.96, 160.07, 72.61), Some(0.114)),
    (gm("braden_nutrition", 2.39, 0.45, 2.42, 0.45), Some(0.271)),
    (gm("total_bilirubin", 1.38, 2.24, 1.28, 2.02), Some(0.411)),
    (gm("jh_hlm_mobility", 2.34, 0.51, 2.40, 0.54), Some(0.086)),
    (gm("phosphorous", 3.48, 1.01, 3.51, 1.02), Some(0.318)),
    (gm("anion_gap", 12.97, 3.35, 12.52, 3.21), Some(0.023)),
    (gm("respiratory_rate_set", 18.19, 3.36, 18.06, 3.11), Some(0.531)),
    (gm("peak_inspiratory_pressure", 19.38, 4.13, 19.49, 3.74), Some(0.630)),
    (gm("braden_moisture", 3.55, 0.40, 3.58, 0.38), Some(0.202)),
    (gm("age", 69.74, 9.31, 69.52, 8.88), Some(0.687)),
    (gm("differential_lymphs", 13.82, 6.93, 14.28, 6.85), Some(0.267)),
    (gm("charlson_index", 4.28, 1.67, 4.28, 1.77), Some(0.983)),
    (gm("cefepime", 0.28, 0.45, 0.26, 0.44), Some(0.531)),
    (gm("invasive_ventilation", 0.48, 0.50, 0.46, 0.50), Some(0.669)),
];

/// Per-class generator parameters: label 0 = survivors, label 1 = non-survivors.
pub fn survival_summary() -> CohortSummary {
    let n1 = (COHORT_SIZE as f64 * EVENT_RATE).round() as usize;
    let n0 = COHORT_SIZE - n1;
    let group = |label: u8, n: usize| GroupSummary {
        label: Some(label),
        n_rows: n,
        features: SURVIVAL_MOMENTS
            .iter()
            .map(|m| {
                let (mean, sd) = if label == 0 {
                    (m.mean_a, m.sd_a)
                } else {
                    (m.mean_b, m.sd_b)
                };
                FeatureMoments {
                    mean: Some(mean),
                    sd: Some(sd),
                    missing_fraction: 0.0,
                    documented: n,
                }
            })
            .collect(),
    };
    CohortSummary {
        feature_names: SURVIVAL_MOMENTS.iter().map(|m| m.feature.to_string()).collect(),
        groups: vec![group(0, n0), group(1, n1)],
        event_rate: EVENT_RATE,
    }
}
