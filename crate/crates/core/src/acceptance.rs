//! Acceptance checks, shared by the `selftest` verb and the `acceptance`
//! test target. Each check pits the library against an independent oracle
//! or a published number and reports one line.

use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{reference, stratified_split, CohortTable, FeatureKind, FeatureSpec, Schema};
use crate::eval::{auroc, welch_t, MetricReport};
use crate::explain::{ale, background_sample, dream_sample, shap_exhaustive, shap_tree, AleKind, DreamConfig};
use crate::models::{sigmoid, train_gbdt, FittedModel, GbdtParams, MlpConfig, MlpModel, ModelSpec, TrainedModel};
use crate::preprocess::{ClassWeights, PipelineConfig};
use crate::report::{load_report, run_pipeline, RunConfig, RunManifest};
use crate::rng;
use crate::select::{coverage_filter, mutual_information_discrete, rank_features, CoverageFilterConfig, RankConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "criterion {:>2} {status} {}: {}", self.id, self.name, self.detail)
    }
}

type Check = fn() -> Result<(bool, String)>;

pub const CRITERIA: [(u8, &str, Check); 11] = [
    (1, "welch reproduction", welch_reproduction),
    (2, "confusion consistency", confusion_consistency),
    (3, "class weights", class_weights),
    (4, "shap oracle equivalence", shap_equivalence),
    (5, "ale oracle", ale_oracle),
    (6, "mi oracle", mi_oracle),
    (7, "auroc oracle", auroc_oracle),
    (8, "mlp gradient check", gradient_check),
    (9, "dream sampler", dream_gaussian),
    (10, "end-to-end synthetic run", end_to_end),
    (11, "leakage probe", leakage_probe),
];

/// Runs one criterion; errors and panics count as failures.
pub fn run_criterion(id: u8) -> CriterionResult {
    let (id, name, check) = *CRITERIA.iter().find(|c| c.0 == id).expect("criterion id");
    let (passed, detail) = match catch_unwind(AssertUnwindSafe(check)) {
        Ok(Ok(r)) => r,
        Ok(Err(e)) => (false, format!("error: {e}")),
        Err(_) => (false, "panicked".to_string()),
    };
    CriterionResult {
        id,
        name,
        passed,
        detail,
    }
}

pub fn run_all() -> Vec<CriterionResult> {
    CRITERIA.iter().map(|c| run_criterion(c.0)).collect()
}

fn welch_reproduction() -> Result<(bool, String)> {
    let p = |name: &str| -> Result<f64> {
        let (m, _) = reference::SPLIT_MOMENTS
            .iter()
            .find(|(m, _)| m.feature == name)
            .ok_or_else(|| Error::Config(format!("no reference row {name}")))?;
        let n_a = reference::TRAIN_SIZE;
        let n_b = reference::TEST_SIZE;
        Ok(welch_t(m.mean_a, m.sd_a, n_a, m.mean_b, m.sd_b, n_b)?.p)
    };
    let (age, ptt, bun, gap) = (p("age")?, p("ptt")?, p("bun")?, p("anion_gap")?);
    let ok = (age - 0.687).abs() <= 0.01 && (ptt - 0.827).abs() <= 0.01 && bun < 0.001 && (gap - 0.023).abs() <= 0.005;
    Ok((ok, format!("p(age)={age:.4} p(ptt)={ptt:.4} p(bun)={bun:.2e} p(anion_gap)={gap:.4}")))
}

fn confusion_consistency() -> Result<(bool, String)> {
    let (n, pos) = (390usize, 43usize);
    let r3 = |v: f64| (v * 1000.0).round() as i64;
    let target = [831, 522, 837, 830, 379, 976]; // accuracy, f1, sens, spec, ppv, npv
    let mut hits = Vec::new();
    for tp in 0..=pos {
        for fp in 0..=(n - pos) {
            let (fn_, tn) = (pos - tp, n - pos - fp);
            let acc = (tp + tn) as f64 / n as f64;
            let f1 = 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64;
            let sens = tp as f64 / pos as f64;
            let spec = tn as f64 / (n - pos) as f64;
            let ppv = tp as f64 / (tp + fp).max(1) as f64;
            let npv = tn as f64 / (tn + fn_).max(1) as f64;
            if [acc, f1, sens, spec, ppv, npv].map(r3) == target {
                hits.push((tp, fp, tn, fn_));
            }
        }
    }
    let counts = crate::eval::ConfusionCounts {
        tp: 36,
        fp: 59,
        tn: 288,
        fn_: 7,
    };
    let m = MetricReport::from_counts(counts, 0.5);
    let lib = [m.accuracy, m.f1, m.sensitivity, m.specificity, m.ppv, m.npv].map(|v| v.map(r3).unwrap_or(-1));
    let ok = hits == [(36, 59, 288, 7)] && lib == target;
    Ok((ok, format!("search hits {hits:?}; library metrics {lib:?} (x1000)")))
}

fn class_weights() -> Result<(bool, String)> {
    let w = ClassWeights::from_event_rate(reference::EVENT_RATE)?;
    let mut r = rng::seeded(3);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let n = r.random_range(2..2000);
        let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random::<f64>() < r.random::<f64>())).collect();
        let Ok(cw) = ClassWeights::from_labels(&labels) else { continue };
        for y in [0u8, 1] {
            let f = labels.iter().filter(|&&l| l == y).count() as f64 / n as f64;
            // two correctly rounded divisions: at most 2 ulp from 1
            worst = worst.max((cw.weight(y) * f - 1.0).abs() / f64::EPSILON);
        }
    }
    let ok = (w.w1 - 5.102).abs() <= 0.001 && worst <= 2.0;
    Ok((ok, format!("w1={:.5}; max |w_y f_y - 1| = {worst} ulp", w.w1)))
}

fn gbdt_fixture(n: usize, d: usize, n_trees: usize, seed: u64) -> Result<(TrainedModel, Array2<f64>)> {
    let mut r = rng::seeded(seed);
    let x = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut r));
    let y: Vec<u8> = x
        .rows()
        .into_iter()
        .map(|row| {
            let s = row[0] + 0.8 * row[1] * row[2] - 0.5 * row[3] + 0.3 * row[d - 1];
            u8::from(r.random::<f64>() < sigmoid(2.0 * s))
        })
        .collect();
    let params = GbdtParams {
        n_trees,
        ..GbdtParams::default()
    };
    Ok((TrainedModel::Gbdt(train_gbdt(x.view(), &y, &vec![1.0; n], &params, seed)?), x))
}

fn shap_equivalence() -> Result<(bool, String)> {
    let (model, x) = gbdt_fixture(200, 8, 40, 11)?;
    let names: Vec<String> = (0..8).map(|j| format!("x{j}")).collect();
    let background = background_sample(x.view(), 48, 3);
    let shap = shap_tree(&model, &names, x.view(), background.view())?;
    let mut worst: f64 = 0.0;
    for (i, row) in x.rows().into_iter().enumerate() {
        let exact = shap_exhaustive(|r| model.margin(r), &row.to_vec(), background.view())?;
        for (a, b) in exact.iter().zip(shap.values.row(i)) {
            worst = worst.max((a - b).abs());
        }
    }
    let mut r = rng::seeded(77);
    let fresh = Array2::from_shape_simple_fn((1000, 8), || StandardNormal.sample(&mut r));
    let fresh_shap = shap_tree(&model, &names, fresh.view(), background.view())?;
    let efficiency = fresh_shap
        .values
        .rows()
        .into_iter()
        .zip(fresh.rows())
        .map(|(phi, row)| (fresh_shap.base_value + phi.sum() - model.margin(&row.to_vec())).abs())
        .fold(0.0, f64::max);
    Ok((
        worst < 1e-9 && efficiency < 1e-6,
        format!("max |tree - exhaustive| = {worst:.2e}; max efficiency gap = {efficiency:.2e}"),
    ))
}

/// Quantile edges, bins, telescoped dense-grid sums and centering, straight
/// from the ALE definition.
fn ale_quadrature<F: Fn(&[f64]) -> f64>(f: F, data: ArrayView2<f64>, j: usize, k: usize, steps: usize) -> Vec<f64> {
    let mut v: Vec<f64> = data.column(j).to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let edges: Vec<f64> = (0..=k)
        .map(|b| {
            let h = (n - 1) as f64 * b as f64 / k as f64;
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        })
        .collect();
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for row in data.rows() {
        let b = (0..k).find(|&b| row[j] <= edges[b + 1]).unwrap_or(k - 1);
        let mut z = row.to_vec();
        for s in 0..steps {
            let step = (edges[b + 1] - edges[b]) / steps as f64;
            z[j] = edges[b] + step * (s + 1) as f64;
            let hi = f(&z);
            z[j] = edges[b] + step * s as f64;
            sums[b] += hi - f(&z);
        }
        counts[b] += 1;
    }
    let mut effects = vec![0.0];
    for b in 0..k {
        effects.push(effects[b] + sums[b] / counts[b] as f64);
    }
    let mean = (0..k).map(|b| counts[b] as f64 * (effects[b] + effects[b + 1]) / 2.0).sum::<f64>() / n as f64;
    effects.iter().map(|a| a - mean).collect()
}

fn ale_oracle() -> Result<(bool, String)> {
    let (model, x) = gbdt_fixture(200, 5, 50, 21)?;
    let f = |r: &[f64]| model.margin(r);
    let mut worst: f64 = 0.0;
    for j in 0..5 {
        let curve = ale(f, x.view(), j, "x", AleKind::Binned, 20)?;
        let oracle = ale_quadrature(f, x.view(), j, 20, 400);
        if curve.centered.len() != oracle.len() {
            return Ok((false, format!("feature {j}: {} edges vs {}", curve.centered.len(), oracle.len())));
        }
        worst = curve.centered.iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    let linear = ale(|r| 2.0 * r[0] + r[1], x.view(), 0, "x0", AleKind::Binned, 20)?;
    let slope_err = linear.slopes().iter().map(|s| (s - 2.0).abs()).fold(0.0, f64::max);
    Ok((
        worst < 1e-6 && slope_err < 1e-9,
        format!("max |ale - quadrature| = {worst:.2e}; linear slope error = {slope_err:.2e}"),
    ))
}

fn mi_oracle() -> Result<(bool, String)> {
    let mut r = rng::seeded(6);
    let mut worst: f64 = 0.0;
    let mut fixtures = 0;
    for rows in 2..=4usize {
        for cols in 2..=4usize {
            for _ in 0..25 {
                let table: Vec<Vec<usize>> =
                    (0..rows).map(|_| (0..cols).map(|_| r.random_range(1..12)).collect()).collect();
                let (mut a, mut b) = (Vec::new(), Vec::new());
                for (i, row) in table.iter().enumerate() {
                    for (j, &c) in row.iter().enumerate() {
                        a.extend(std::iter::repeat_n(i, c));
                        b.extend(std::iter::repeat_n(j, c));
                    }
                }
                let n = a.len() as f64;
                let direct: f64 = (0..rows)
                    .flat_map(|i| (0..cols).map(move |j| (i, j)))
                    .map(|(i, j)| {
                        let pij = table[i][j] as f64 / n;
                        let pi = table[i].iter().sum::<usize>() as f64 / n;
                        let pj = table.iter().map(|row| row[j]).sum::<usize>() as f64 / n;
                        pij * (pij / (pi * pj)).ln()
                    })
                    .sum();
                worst = worst.max((mutual_information_discrete(&a, &b)? - direct.max(0.0)).abs());
                fixtures += 1;
            }
        }
    }
    let x: Vec<usize> = (0..1000).map(|i| i % 2).collect();
    let self_mi = mutual_information_discrete(&x, &x)?;
    let ln2_err = (self_mi - std::f64::consts::LN_2).abs();
    Ok((
        worst < 1e-12 && ln2_err < 1e-12,
        format!("{fixtures} tables, max deviation {worst:.2e}; |MI(x;x) - ln 2| = {ln2_err:.2e}"),
    ))
}

fn auroc_oracle() -> Result<(bool, String)> {
    let mut r = rng::seeded(5);
    let mut mismatches = 0;
    let mut fixtures = 0;
    while fixtures < 100 {
        let n = r.random_range(2..=50);
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..8u8))).collect();
        let labels: Vec<u8> = (0..n).map(|_| r.random_range(0..2u8)).collect();
        let n1 = labels.iter().filter(|&&y| y == 1).count();
        if n1 == 0 || n1 == n {
            continue;
        }
        let mut twice_concordant = 0usize;
        for i in 0..n {
            for j in 0..n {
                if labels[i] == 1 && labels[j] == 0 {
                    twice_concordant += match scores[i].partial_cmp(&scores[j]) {
                        Some(std::cmp::Ordering::Greater) => 2,
                        Some(std::cmp::Ordering::Equal) => 1,
                        _ => 0,
                    };
                }
            }
        }
        let oracle = twice_concordant as f64 / (2 * n1 * (n - n1)) as f64;
        if auroc(&scores, &labels)? != oracle {
            mismatches += 1;
        }
        fixtures += 1;
    }
    Ok((mismatches == 0, format!("{mismatches} of {fixtures} fixtures differ from pairwise concordance")))
}

fn gradient_check() -> Result<(bool, String)> {
    let mut r = rng::seeded(12);
    let (n, d) = (6, 4);
    let x = Array2::from_shape_simple_fn((n, d), || StandardNormal.sample(&mut r));
    let y: Vec<u8> = (0..n).map(|i| u8::from(i % 3 == 0)).collect();
    let w: Vec<f64> = (0..n).map(|i| 0.5 + i as f64 * 0.4).collect();
    let cfg = MlpConfig {
        hidden: 6,
        ..MlpConfig::default()
    };
    let mut worst: f64 = 0.0;
    let eps = 1e-5;
    for seed in 0..5 {
        let model = MlpModel::init(d, &cfg, 0.3, seed);
        let analytic = model.loss_and_gradient(x.view(), &y, &w).1.flat();
        let base = model.flat_params();
        let mut probe = model.clone();
        for (k, g) in analytic.iter().enumerate() {
            let mut p = base.clone();
            p[k] = base[k] + eps;
            probe.set_flat_params(&p);
            let up = probe.loss_and_gradient(x.view(), &y, &w).0;
            p[k] = base[k] - eps;
            probe.set_flat_params(&p);
            let down = probe.loss_and_gradient(x.view(), &y, &w).0;
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max((g - numeric).abs() / g.abs().max(numeric.abs()).max(1e-8));
        }
    }
    Ok((worst < 1e-4, format!("max relative error {worst:.2e}")))
}

fn dream_gaussian() -> Result<(bool, String)> {
    let cfg = DreamConfig {
        seed: 17,
        ..DreamConfig::default()
    };
    let mut r = rng::seeded(1);
    let init: Vec<Vec<f64>> = (0..cfg.n_chains)
        .map(|_| {
            (0..2)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut r);
                    3.0 * z
                })
                .collect()
        })
        .collect();
    let run = dream_sample(|v| -0.5 * (v[0] * v[0] + v[1] * v[1]), &init, &cfg)?;
    let n = run.n_samples() as f64;
    let mut ok = true;
    let mut parts = Vec::new();
    for j in 0..2 {
        let mean = run.pooled().map(|s| s[j]).sum::<f64>() / n;
        let var = run.pooled().map(|s| (s[j] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        ok &= mean.abs() < 0.05 && (var - 1.0).abs() < 0.1 && run.r_hat[j] < 1.05;
        parts.push(format!("x{j}: mean {mean:+.4} var {var:.4} R-hat {:.4}", run.r_hat[j]));
    }
    Ok((ok, parts.join("; ")))
}

fn scratch_dir(tag: &str) -> PathBuf {
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos())
        .unwrap_or(0);
    std::env::temp_dir().join(format!("icurisk-{tag}-{}-{stamp}", std::process::id()))
}

fn checksums(m: &RunManifest) -> Vec<(String, String)> {
    m.artifacts.iter().map(|a| (a.path.clone(), a.sha256.clone())).collect()
}

fn end_to_end() -> Result<(bool, String)> {
    let dirs = [scratch_dir("e2e-a"), scratch_dir("e2e-b")];
    let run = |out: &PathBuf| -> Result<RunManifest> {
        let mut cfg = RunConfig::synthetic(20_240_611);
        cfg.out = out.clone();
        run_pipeline(&cfg)
    };
    let result = (|| {
        let first = run(&dirs[0])?;
        let report = load_report(&dirs[0])?;
        let second = run(&dirs[1])?;
        let deterministic = checksums(&first) == checksums(&second);
        let boosted: Vec<_> = report.models.iter().filter(|m| matches!(m.spec, ModelSpec::Gbdt(_))).collect();
        let mut ok = deterministic && !boosted.is_empty() && report.cohort.n_rows == reference::COHORT_SIZE;
        let mut parts = vec![format!("deterministic={deterministic}")];
        for m in &boosted {
            let a = m.test.auroc.unwrap_or(f64::NAN);
            let s = m.test.sensitivity.unwrap_or(f64::NAN);
            ok &= a >= 0.85 && s >= 0.75;
            parts.push(format!("{} AUROC {a:.3} sens {s:.3}", m.name));
        }
        let posterior = report.explain.as_ref().map(|e| e.posterior_inputs.mean).unwrap_or(f64::NAN);
        ok &= posterior > reference::EVENT_RATE;
        parts.push(format!("posterior mean {posterior:.3}"));
        Ok((ok, parts.join("; ")))
    })();
    for d in &dirs {
        let _ = std::fs::remove_dir_all(d);
    }
    result
}

/// Fits everything that learns from training rows, for the leakage probe.
fn fit_fingerprint(table: &CohortTable, train_rows: &[usize], seed: u64) -> Result<String> {
    let train = table.subset(train_rows)?;
    let coverage = coverage_filter(&train, &CoverageFilterConfig::default())?;
    let ranking = rank_features(&train.project(&coverage.kept)?, &RankConfig::default(), 3)?;
    let spec = ModelSpec::Gbdt(GbdtParams {
        n_trees: 20,
        ordered_mode: true,
        ..GbdtParams::default()
    });
    let model = FittedModel::fit(table, train_rows, &PipelineConfig::default(), &spec, seed)?;
    Ok(serde_json::to_string(&(coverage, ranking, model))?)
}

fn leakage_probe() -> Result<(bool, String)> {
    let schema = Schema::new(vec![
        FeatureSpec::continuous("lab_a"),
        FeatureSpec::continuous("lab_b"),
        FeatureSpec::binary("flag"),
        FeatureSpec::new("unit", FeatureKind::Categorical).with_levels(["micu", "sicu", "ccu"]),
    ])?;
    let mut leaks = Vec::new();
    for seed in 0..20u64 {
        let mut r = rng::seeded(seed);
        let n = 160;
        let mut rows = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let a: f64 = StandardNormal.sample(&mut r);
            let b: f64 = StandardNormal.sample(&mut r);
            let unit = r.random_range(0..3u8);
            let y = u8::from(r.random::<f64>() < sigmoid(a + 0.5 * f64::from(unit) - 0.8));
            let missing = |r: &mut rng::Rng, v: f64| (r.random::<f64>() > 0.1).then_some(v);
            rows.push(vec![
                missing(&mut r, a),
                missing(&mut r, b),
                Some(f64::from(u8::from(r.random::<bool>()))),
                Some(f64::from(unit)),
            ]);
            labels.push(y);
        }
        let table = CohortTable::new(schema.clone(), rows, labels)?;
        let split = stratified_split(&table, 0.7, seed)?;
        let before = fit_fingerprint(&table, &split.train_rows, seed)?;
        let mut mutated = table.clone();
        for &i in &split.test_rows {
            mutated.set_value(i, 0, Some(r.random_range(-50.0..50.0)));
            mutated.set_value(i, 1, None);
            mutated.set_value(i, 2, Some(1.0));
            mutated.set_value(i, 3, Some(f64::from(r.random_range(0..3u8))));
            mutated.set_label(i, 1 - mutated.labels()[i]);
        }
        if fit_fingerprint(&mutated, &split.train_rows, seed)? != before {
            leaks.push(seed);
        }
    }
    Ok((leaks.is_empty(), format!("20 seeds, fitted parameters changed for seeds {leaks:?}")))
}
