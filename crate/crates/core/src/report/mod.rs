//! End-to-end runs: configuration, the staged pipeline, artifact emission
//! (CSV, SVG, `report.json`) and the checksummed run manifest.

mod config;
mod emit;
mod run;
mod svg;

pub use config::{DataSource, EvalConfig, ExplainConfig, RunConfig, SelectionConfig};
pub use emit::{emit_report, slug};
pub use run::{
    load_or_synth, load_report, rebuild_report, run_explain, run_pipeline, Artifact, CohortInfo, ExplainResult,
    ModelResult, NamedModel, ParamPosterior, Report, RocSeries, RunManifest, RunState, SelectionResult, StageTiming,
    COHORT_FILE, MANIFEST_FILE, REPORT_FILE, STATE_FILE,
};
