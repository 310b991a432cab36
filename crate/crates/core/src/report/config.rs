use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::reference;
use crate::eval::ThresholdPolicy;
use crate::explain::DreamConfig;
use crate::models::{default_benchmark, BenchmarkModel};
use crate::preprocess::PipelineConfig;
use crate::select::{CoverageFilterConfig, RankConfig};
use crate::{Error, Result};

/// Where the cohort comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    /// Generated from the reference class-conditional moments.
    Synth {
        #[serde(default = "default_n")]
        n: usize,
        #[serde(default = "default_event_rate")]
        event_rate: f64,
        #[serde(default)]
        missing_rates: Vec<f64>,
    },
    Csv { path: PathBuf },
}

fn default_n() -> usize {
    reference::COHORT_SIZE
}

fn default_event_rate() -> f64 {
    reference::EVENT_RATE
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synth {
            n: default_n(),
            event_rate: default_event_rate(),
            missing_rates: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionConfig {
    pub coverage: CoverageFilterConfig,
    pub rank: RankConfig,
    pub top_k: usize,
}

impl Default for SelectionConfig {
    fn default() -> Self {
        Self {
            coverage: CoverageFilterConfig::default(),
            rank: RankConfig::default(),
            top_k: 17,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub cv_folds: usize,
    pub n_boot: usize,
    pub threshold: ThresholdPolicy,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            cv_folds: 5,
            n_boot: 2000,
            threshold: ThresholdPolicy::Youden,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    pub enabled: bool,
    /// Benchmark row explained; `None` takes the first row.
    pub model: Option<String>,
    pub ablation_boot: usize,
    pub shap_background: usize,
    pub ale_bins: usize,
    /// ALE curves for the top features by MI; `None` covers every selected feature.
    pub ale_features: Option<usize>,
    /// Its seed is replaced by one derived from the run seed.
    pub dream: DreamConfig,
    /// Prior SD on standardized logistic coefficients for parameter-space
    /// posterior risk; `None` skips that analysis.
    pub prior_sd: Option<f64>,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            model: None,
            ablation_boot: 200,
            shap_background: 256,
            ale_bins: 20,
            ale_features: None,
            dream: DreamConfig::default(),
            prior_sd: Some(2.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub seed: u64,
    #[serde(default)]
    pub data: DataSource,
    /// Schema JSON; `None` uses the built-in 17-feature schema.
    #[serde(default)]
    pub schema: Option<PathBuf>,
    #[serde(default = "default_train_fraction")]
    pub train_fraction: f64,
    #[serde(default)]
    pub preprocess: PipelineConfig,
    #[serde(default)]
    pub selection: SelectionConfig,
    /// Benchmark rows in report order; `None` uses the six default rows.
    #[serde(default)]
    pub models: Option<Vec<BenchmarkModel>>,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub explain: ExplainConfig,
    #[serde(default = "default_out")]
    pub out: PathBuf,
}

fn default_train_fraction() -> f64 {
    0.7
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    /// Defaults with a synthetic cohort.
    pub fn synthetic(seed: u64) -> Self {
        Self {
            seed,
            data: DataSource::default(),
            schema: None,
            train_fraction: default_train_fraction(),
            preprocess: PipelineConfig::default(),
            selection: SelectionConfig::default(),
            models: None,
            eval: EvalConfig::default(),
            explain: ExplainConfig::default(),
            out: default_out(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))
    }

    /// Reads a config; relative paths inside it resolve against its directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DataSource::Csv { path } = &mut cfg.data {
            resolve(path);
        }
        if let Some(p) = &mut cfg.schema {
            resolve(p);
        }
        Ok(cfg)
    }

    pub fn benchmark(&self) -> Vec<BenchmarkModel> {
        self.models.clone().unwrap_or_else(default_benchmark)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return bad(format!("train_fraction {} outside (0, 1)", self.train_fraction));
        }
        if let DataSource::Csv { path } = &self.data {
            if !path.is_file() {
                return bad(format!("cohort file {} does not exist", path.display()));
            }
        }
        if let Some(p) = &self.schema {
            if !p.is_file() {
                return bad(format!("schema file {} does not exist", p.display()));
            }
        }
        if self.selection.top_k == 0 {
            return bad("selection.top_k must be >= 1".into());
        }
        if self.eval.cv_folds < 2 || self.eval.n_boot == 0 {
            return bad("eval needs cv_folds >= 2 and n_boot >= 1".into());
        }
        let bench = self.benchmark();
        if bench.is_empty() || bench.iter().any(|b| b.grid.is_empty()) {
            return bad("every benchmark row needs a nonempty grid".into());
        }
        let ex = &self.explain;
        if ex.enabled {
            if ex.ablation_boot == 0 || ex.shap_background == 0 || ex.ale_bins == 0 {
                return bad("explain needs ablation_boot, shap_background and ale_bins >= 1".into());
            }
            if let Some(name) = &ex.model {
                if !bench.iter().any(|b| &b.name == name) {
                    return bad(format!("explain.model `{name}` is not a benchmark row"));
                }
            }
            if ex.prior_sd.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
                return bad("explain.prior_sd must be positive".into());
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, excluding the output directory.
    pub fn hash(&self) -> Result<String> {
        let mut canonical = self.clone();
        canonical.out = PathBuf::new();
        let bytes = serde_json::to_vec(&canonical)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_mandatory() {
        assert!(RunConfig::from_json("{}").is_err());
        let cfg = RunConfig::from_json(r#"{"seed": 3}"#).unwrap();
        assert_eq!(cfg, RunConfig::synthetic(3));
    }

    #[test]
    fn hash_ignores_output_directory() {
        let a = RunConfig::synthetic(1);
        let mut b = a.clone();
        b.out = PathBuf::from("elsewhere");
        assert_eq!(a.hash().unwrap(), b.hash().unwrap());
        b.seed = 2;
        assert_ne!(a.hash().unwrap(), b.hash().unwrap());
    }

    #[test]
    fn missing_input_file_fails_validation() {
        let mut cfg = RunConfig::synthetic(1);
        cfg.data = DataSource::Csv {
            path: PathBuf::from("/nonexistent/cohort.csv"),
        };
        assert_eq!(cfg.validate().unwrap_err().exit_code(), 2);
    }
}
