use icurisk_core::dataset::{reference, synth_cohort, Schema, SynthConfig};
use icurisk_core::eval::{
    auroc, bootstrap_auroc_ci, compare_cohorts, confusion_metrics, regularized_incomplete_beta, student_t_cdf,
    tune_threshold, welch_t, write_comparison_csv, ConfusionCounts, MetricReport, ThresholdPolicy,
};
use icurisk_core::rng;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

fn pairwise_auroc(scores: &[f64], labels: &[u8]) -> f64 {
    let (mut num, mut pairs) = (0.0, 0.0);
    for (i, &yi) in labels.iter().enumerate() {
        for (j, &yj) in labels.iter().enumerate() {
            if yi == 1 && yj == 0 {
                pairs += 1.0;
                if scores[i] > scores[j] {
                    num += 1.0;
                } else if scores[i] == scores[j] {
                    num += 0.5;
                }
            }
        }
    }
    num / pairs
}

fn random_fixture(r: &mut impl Rng, n: usize) -> (Vec<f64>, Vec<u8>) {
    loop {
        // coarse scores so ties occur
        let scores: Vec<f64> = (0..n).map(|_| f64::from(r.random_range(0..12u8)) / 4.0).collect();
        let labels: Vec<u8> = (0..n).map(|_| u8::from(r.random_bool(0.4))).collect();
        if labels.contains(&0) && labels.contains(&1) {
            return (scores, labels);
        }
    }
}

#[test]
fn mann_whitney_equals_pairwise_enumeration() {
    let mut r = rng::seeded(7);
    for _ in 0..100 {
        let n = r.random_range(2..=50);
        let (s, y) = random_fixture(&mut r, n);
        assert_eq!(auroc(&s, &y).unwrap(), pairwise_auroc(&s, &y));
    }
}

proptest! {
    #[test]
    fn auroc_is_rank_invariant_and_antisymmetric(seed in 0u64..1000, n in 2usize..60) {
        let mut r = rng::seeded(seed);
        let (s, y) = random_fixture(&mut r, n);
        let a = auroc(&s, &y).unwrap();
        let transformed: Vec<f64> = s.iter().map(|v| (3.0 * v).exp() - 2.0).collect();
        prop_assert_eq!(a, auroc(&transformed, &y).unwrap());
        let negated: Vec<f64> = s.iter().map(|v| -v).collect();
        prop_assert!((a + auroc(&negated, &y).unwrap() - 1.0).abs() < 1e-12);
    }
}

/// Binormal scores with unit separation: AUROC = Φ(1/√2) ≈ 0.76.
fn binormal(n: usize, seed: u64) -> (Vec<f64>, Vec<u8>) {
    let mut r = rng::seeded(seed);
    let pos = Normal::new(1.0, 1.0).unwrap();
    let neg = Normal::new(0.0, 1.0).unwrap();
    let labels: Vec<u8> = (0..n).map(|i| u8::from(i % 4 == 0)).collect();
    let scores = labels
        .iter()
        .map(|&y| if y == 1 { pos.sample(&mut r) } else { neg.sample(&mut r) })
        .collect();
    (scores, labels)
}

#[test]
fn bootstrap_ci_is_deterministic_and_contains_the_estimate() {
    for seed in 0..10 {
        let (s, y) = binormal(200, seed);
        let a = auroc(&s, &y).unwrap();
        let ci = bootstrap_auroc_ci(&s, &y, 500, seed).unwrap();
        assert!(ci.low <= a && a <= ci.high, "seed {seed}: {ci:?} vs {a}");
        assert_eq!(ci, bootstrap_auroc_ci(&s, &y, 500, seed).unwrap());
    }
}

#[test]
fn bootstrap_width_shrinks_like_inverse_root_n() {
    let width = |n: usize| {
        (0..8u64)
            .map(|s| {
                let (sc, y) = binormal(n, 100 + s);
                let ci = bootstrap_auroc_ci(&sc, &y, 1000, s).unwrap();
                ci.high - ci.low
            })
            .sum::<f64>()
            / 8.0
    };
    let ratio = width(500) / width(2000);
    assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
}

#[test]
fn youden_matches_exhaustive_scan() {
    let mut r = rng::seeded(3);
    for _ in 0..50 {
        let (s, y) = random_fixture(&mut r, 40);
        let t = tune_threshold(&s, &y, ThresholdPolicy::Youden).unwrap();
        let j = |t: f64| {
            let m = confusion_metrics(&s, &y, t);
            m.sensitivity.unwrap() + m.specificity.unwrap() - 1.0
        };
        let mut u = s.clone();
        u.sort_by(f64::total_cmp);
        u.dedup();
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for w in u.windows(2) {
            let mid = w[0] + (w[1] - w[0]) / 2.0;
            if j(mid) > best.0 + 1e-15 {
                best = (j(mid), mid);
            }
        }
        assert_eq!(t, best.1);
    }
}

#[test]
fn reconstructed_confusion_matrix_reproduces_published_metrics() {
    let m = MetricReport::from_counts(ConfusionCounts { tp: 36, fp: 59, tn: 288, fn_: 7 }, 0.5);
    let r3 = |v: Option<f64>| (v.unwrap() * 1000.0).round() / 1000.0;
    assert_eq!(r3(m.accuracy), 0.831);
    assert_eq!(r3(m.f1), 0.522);
    assert_eq!(r3(m.sensitivity), 0.837);
    assert_eq!(r3(m.specificity), 0.830);
    assert_eq!(r3(m.ppv), 0.379);
    assert_eq!(r3(m.npv), 0.976);
    let f1 = 2.0 * m.ppv.unwrap() * m.sensitivity.unwrap() / (m.ppv.unwrap() + m.sensitivity.unwrap());
    assert!((m.f1.unwrap() - f1).abs() < 1e-12);
}

#[test]
fn confusion_counts_are_consistent_with_rates() {
    let (s, y) = binormal(300, 1);
    let m = confusion_metrics(&s, &y, 0.4);
    let c = m.counts;
    assert_eq!(c.total(), 300);
    assert_eq!(c.tp + c.fn_, y.iter().filter(|&&v| v == 1).count());
    assert!((m.sensitivity.unwrap() - c.tp as f64 / (c.tp + c.fn_) as f64).abs() < 1e-15);
}

#[test]
fn t_cdf_agrees_with_reference_implementation() {
    for df in [1.0, 2.5, 7.0, 30.0, 250.0, 1500.0] {
        let reference = StudentsT::new(0.0, 1.0, df).unwrap();
        for t in [-6.0, -2.1, -0.3, 0.0, 0.4, 1.96, 3.5, 9.0] {
            assert!((student_t_cdf(t, df) - reference.cdf(t)).abs() < 1e-10, "t={t} df={df}");
        }
    }
    for (a, b, x) in [(0.5, 0.5, 0.3), (2.0, 3.0, 0.7), (50.0, 0.5, 0.99), (0.1, 8.0, 0.01)] {
        let beta = statrs::function::beta::beta_reg(a, b, x);
        assert!((regularized_incomplete_beta(a, b, x) - beta).abs() < 1e-10);
    }
}

#[test]
fn welch_reproduces_published_split_p_values() {
    for (m, p) in reference::SPLIT_MOMENTS.iter() {
        let r = welch_t(m.mean_a, m.sd_a, reference::TRAIN_SIZE, m.mean_b, m.sd_b, reference::TEST_SIZE).unwrap();
        assert!((0.0..=1.0).contains(&r.p));
        match (m.feature, p) {
            ("bun", None) => assert!(r.p < 0.001),
            ("age", Some(p)) | ("ptt", Some(p)) => assert!((r.p - p).abs() < 0.01, "{}: {}", m.feature, r.p),
            ("anion_gap", Some(p)) => assert!((r.p - p).abs() < 0.005, "{}", r.p),
            _ => {}
        }
    }
}

#[test]
fn welch_matches_a_direct_student_t_computation() {
    let (m1, s1, n1, m2, s2, n2) = (12.97, 3.35, 911usize, 12.52, 3.21, 390usize);
    let (a, b) = (s1 * s1 / n1 as f64, s2 * s2 / n2 as f64);
    let t = (m1 - m2) / (a + b).sqrt();
    let df = (a + b).powi(2) / (a * a / (n1 - 1) as f64 + b * b / (n2 - 1) as f64);
    let p = 2.0 * (1.0 - StudentsT::new(0.0, 1.0, df).unwrap().cdf(t.abs()));
    let r = welch_t(m1, s1, n1, m2, s2, n2).unwrap();
    assert!((r.t - t).abs() < 1e-12 && (r.df - df).abs() < 1e-9 && (r.p - p).abs() < 1e-10);
}

#[test]
fn identical_cohorts_have_unit_p_values() {
    let cfg = SynthConfig { n: 300, event_rate: 0.2, missing_rates: vec![0.1], seed: 1 };
    let t = synth_cohort(&Schema::table1(), &reference::survival_summary(), &cfg).unwrap();
    for row in compare_cohorts(&t, &t).unwrap() {
        assert!((row.test.unwrap().p - 1.0).abs() < 1e-12);
    }
}

#[test]
fn survivor_and_nonsurvivor_cohorts_differ_on_every_feature() {
    let cfg = SynthConfig { n: 20_000, event_rate: 0.5, missing_rates: vec![], seed: 5 };
    let t = synth_cohort(&Schema::table1(), &reference::survival_summary(), &cfg).unwrap();
    let rows_with = |label: u8| (0..t.n_rows()).filter(|&i| t.labels()[i] == label).collect::<Vec<_>>();
    let survivors = t.subset(&rows_with(0)).unwrap();
    let nonsurvivors = t.subset(&rows_with(1)).unwrap();
    let cmp = compare_cohorts(&survivors, &nonsurvivors).unwrap();
    assert_eq!(cmp.len(), 17);
    for row in &cmp {
        let test = row.test.unwrap();
        assert!(test.p < 0.001, "{}: p = {}", row.feature, test.p);
        // direct per-column test agrees with the table-level one
        let direct = welch_t(
            row.mean_a.unwrap(),
            row.sd_a.unwrap(),
            row.n_a,
            row.mean_b.unwrap(),
            row.sd_b.unwrap(),
            row.n_b,
        )
        .unwrap();
        assert_eq!(direct, test);
    }
    let mut buf = Vec::new();
    write_comparison_csv(&mut buf, &cmp).unwrap();
    assert_eq!(String::from_utf8(buf).unwrap().lines().count(), 18);
}

#[test]
fn sparse_feature_is_skipped_with_a_note() {
    let cfg = SynthConfig { n: 40, event_rate: 0.5, missing_rates: vec![0.0], seed: 2 };
    let mut t = synth_cohort(&Schema::table1(), &reference::survival_summary(), &cfg).unwrap();
    for i in 1..t.n_rows() {
        t.set_value(i, 0, None);
    }
    let cmp = compare_cohorts(&t, &t).unwrap();
    assert!(cmp[0].test.is_none() && cmp[0].note.is_some());
    assert!(cmp[1].test.is_some());
}
