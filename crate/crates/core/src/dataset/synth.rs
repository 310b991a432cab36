use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{CohortSummary, CohortTable, FeatureKind, FeatureSpec, Schema};
use crate::rng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub event_rate: f64,
    /// Per-feature probability of a value being missing (MCAR). Empty means
    /// no missingness; a single entry applies to every feature.
    #[serde(default)]
    pub missing_rates: Vec<f64>,
    pub seed: u64,
}

impl SynthConfig {
    fn missing_rate(&self, feature: usize) -> f64 {
        match self.missing_rates.len() {
            0 => 0.0,
            1 => self.missing_rates[0],
            _ => self.missing_rates[feature],
        }
    }
}

const MAX_REJECTIONS: usize = 10_000;

fn truncated_normal(rng: &mut rng::Rng, spec: &FeatureSpec, mean: f64, sd: f64) -> f64 {
    if sd <= 0.0 {
        return spec.clamp(mean);
    }
    for _ in 0..MAX_REJECTIONS {
        let z: f64 = StandardNormal.sample(rng);
        let v = mean + sd * z;
        if spec.contains(v) {
            return v;
        }
    }
    spec.clamp(mean)
}

/// Generates a cohort with independent class-conditional marginals.
///
/// Labels are Bernoulli(`event_rate`). Continuous and score features are
/// Gaussian with the class mean/SD from `summary`, truncated to the schema
/// bounds by rejection; binary features are Bernoulli with the class mean as
/// prevalence; categorical codes are rounded Gaussian draws. Values are then
/// deleted completely at random. Labels, values and missingness use separate
/// derived streams, so changing missing rates does not move the values.
pub fn synth_cohort(schema: &Schema, summary: &CohortSummary, cfg: &SynthConfig) -> Result<CohortTable> {
    if cfg.n < 10 {
        return Err(Error::Config(format!("synthetic cohort needs n ≥ 10, got {}", cfg.n)));
    }
    if !(cfg.event_rate > 0.0 && cfg.event_rate < 1.0) {
        return Err(Error::Config(format!("event rate {} outside (0, 1)", cfg.event_rate)));
    }
    let d = schema.len();
    if cfg.missing_rates.len() > 1 && cfg.missing_rates.len() != d {
        return Err(Error::Config(format!(
            "{} missing rates for {d} features",
            cfg.missing_rates.len()
        )));
    }
    if let Some(r) = cfg.missing_rates.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
        return Err(Error::Config(format!("missing rate {r} outside [0, 1)")));
    }

    // (mean, sd) per class per feature.
    let mut params = vec![[(0.0, 0.0); 2]; d];
    for (j, spec) in schema.features.iter().enumerate() {
        for class in 0..2u8 {
            let m = summary.moments(class, &spec.name).ok_or_else(|| {
                Error::Config(format!("summary has no class-{class} moments for `{}`", spec.name))
            })?;
            let mean = m.mean.ok_or_else(|| {
                Error::Config(format!("undefined class-{class} mean for `{}`", spec.name))
            })?;
            let sd = match spec.kind {
                FeatureKind::Binary => 0.0,
                _ => m.sd.ok_or_else(|| {
                    Error::Config(format!("undefined class-{class} sd for `{}`", spec.name))
                })?,
            };
            params[j][class as usize] = (mean, sd);
        }
    }

    let mut label_rng = rng::derived(cfg.seed, &[0]);
    let mut value_rng = rng::derived(cfg.seed, &[1]);
    let mut missing_rng = rng::derived(cfg.seed, &[2]);

    let labels: Vec<u8> = (0..cfg.n)
        .map(|_| u8::from(label_rng.random::<f64>() < cfg.event_rate))
        .collect();
    let mut values = Vec::with_capacity(cfg.n * d);
    for &y in &labels {
        for (j, spec) in schema.features.iter().enumerate() {
            let (mean, sd) = params[j][y as usize];
            let v = match spec.kind {
                FeatureKind::Binary => f64::from(u8::from(value_rng.random::<f64>() < mean.clamp(0.0, 1.0))),
                FeatureKind::Categorical => {
                    let top = (spec.levels.len() - 1) as f64;
                    truncated_normal(&mut value_rng, spec, mean, sd).round().clamp(0.0, top)
                }
                FeatureKind::Continuous | FeatureKind::OrdinalScore => {
                    truncated_normal(&mut value_rng, spec, mean, sd)
                }
            };
            let missing = missing_rng.random::<f64>() < cfg.missing_rate(j);
            values.push((!missing).then_some(v));
        }
    }
    CohortTable::from_flat(schema.clone(), values, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::reference;

    fn cfg(n: usize, seed: u64) -> SynthConfig {
        SynthConfig {
            n,
            event_rate: reference::EVENT_RATE,
            missing_rates: vec![],
            seed,
        }
    }

    #[test]
    fn event_count_is_binomially_plausible() {
        let t = synth_cohort(&Schema::table1(), &reference::survival_summary(), &cfg(1301, 5)).unwrap();
        assert!((t.event_rate() - 0.196).abs() < 0.04);
        assert!(t.is_complete());
    }

    #[test]
    fn values_respect_bounds_and_binary_support() {
        let schema = Schema::table1();
        let t = synth_cohort(&schema, &reference::survival_summary(), &cfg(2000, 8)).unwrap();
        for row in t.rows() {
            for (v, spec) in row.iter().zip(&schema.features) {
                let v = v.unwrap();
                assert!(spec.contains(v), "{} = {v}", spec.name);
                if spec.kind == FeatureKind::Binary {
                    assert!(v == 0.0 || v == 1.0);
                }
            }
        }
    }

    #[test]
    fn missingness_does_not_move_values() {
        let schema = Schema::table1();
        let summary = reference::survival_summary();
        let full = synth_cohort(&schema, &summary, &cfg(500, 2)).unwrap();
        let mut c = cfg(500, 2);
        c.missing_rates = vec![0.3];
        let holes = synth_cohort(&schema, &summary, &c).unwrap();
        assert_eq!(full.labels(), holes.labels());
        let frac = holes.missing_count() as f64 / (500.0 * 17.0);
        assert!((frac - 0.3).abs() < 0.03);
        for r in 0..500 {
            for j in 0..17 {
                if let Some(v) = holes.value(r, j) {
                    assert_eq!(Some(v), full.value(r, j));
                }
            }
        }
    }

    #[test]
    fn config_errors() {
        let schema = Schema::table1();
        let summary = reference::survival_summary();
        let mut c = cfg(100, 0);
        c.missing_rates = vec![1.0];
        assert!(matches!(synth_cohort(&schema, &summary, &c), Err(Error::Config(_))));
        assert!(matches!(synth_cohort(&schema, &summary, &cfg(5, 0)), Err(Error::Config(_))));
        let mut c = cfg(100, 0);
        c.event_rate = 1.0;
        assert!(synth_cohort(&schema, &summary, &c).is_err());
    }
}
