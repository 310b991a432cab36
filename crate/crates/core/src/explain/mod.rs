//! Model explanations: leave-one-feature-out ablation, Shapley attributions
//! (exhaustive and tree-path), accumulated local effects, and posterior risk
//! distributions sampled with DREAM.

mod ablation;
mod ale;
mod dream;
mod posterior;
mod shap;

pub use ablation::{ablation, write_ablation_csv, AblationEntry, AblationReport};
pub use ale::{ale, quantile_edges, write_ale_csv, AleCurve, AleKind};
pub use dream::{acceptance_probability, dream_sample, split_r_hat, DreamConfig, DreamResult};
pub use posterior::{posterior_risk_inputs, posterior_risk_params, write_posterior_csv, PosteriorRisk, R_HAT_LIMIT};
pub use shap::{
    background_sample, shap_exhaustive, shap_tree, write_shap_csv, ShapMatrix, MAX_EXHAUSTIVE_FEATURES,
};
