//! Interpretable 30-day mortality risk modelling for tabular ICU cohorts.
//!
//! The crate is organised by pipeline stage:
//!
//! * [`dataset`]: cohort tables, CSV I/O, stratified splits, summaries and a
//!   synthetic cohort generator calibrated to published class-conditional moments.
//! * [`preprocess`]: KNN imputation, smoothed target encoding, z-scoring and
//!   inverse-frequency class weights, always fitted on training rows only.
//! * [`select`]: coverage filtering and mutual-information ranking.
//! * [`models`]: boosted trees, penalized logistic regression, Gaussian naive
//!   Bayes, a one-hidden-layer network, and stratified grid-search CV.
//! * [`eval`]: AUROC with bootstrap intervals, threshold tuning, confusion
//!   metrics and Welch t-tests.
//! * [`explain`]: ablation, exact and tree SHAP, ALE curves and a DREAM
//!   sampler for posterior risk.
//! * [`report`]: the end-to-end run, artifact emission and run manifests.

pub mod acceptance;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod explain;
pub mod models;
pub mod preprocess;
pub mod report;
pub mod rng;
pub mod select;

pub use error::{Error, Result};
