use icurisk_core::dataset::{reference, synth_cohort, CohortTable, FeatureSpec, Schema, SynthConfig};
use icurisk_core::rng;
use icurisk_core::select::{
    coverage_filter, mutual_information, rank_features, write_selection_report, CoverageFilterConfig, DropReason,
    RankConfig,
};
use rand::Rng;

fn table1_cohort(seed: u64, missing: f64) -> CohortTable {
    let cfg = SynthConfig {
        n: reference::COHORT_SIZE,
        event_rate: reference::EVENT_RATE,
        missing_rates: vec![missing],
        seed,
    };
    synth_cohort(&Schema::table1(), &reference::survival_summary(), &cfg).unwrap()
}

/// A is a noisy copy of the label, B is independent noise, C duplicates A.
fn separable_fixture(n: usize, seed: u64) -> CohortTable {
    let mut r = rng::seeded(seed);
    let schema = Schema::new(vec![
        FeatureSpec::continuous("a"),
        FeatureSpec::continuous("b"),
        FeatureSpec::continuous("c"),
    ])
    .unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let y = u8::from(r.random_bool(0.3));
        let a = f64::from(y) * 2.0 + r.random::<f64>();
        let b = r.random::<f64>();
        rows.push(vec![Some(a), Some(b), Some(a)]);
        labels.push(y);
    }
    CohortTable::new(schema, rows, labels).unwrap()
}

#[test]
fn label_correlated_feature_outranks_noise() {
    let t = separable_fixture(5000, 11);
    let ranking = rank_features(&t, &RankConfig::default(), 3).unwrap();
    let rank = |f: &str| ranking.entries.iter().find(|e| e.feature == f).unwrap().rank;
    assert!(rank("a") < rank("b"));
    assert!(ranking.mi("b").unwrap() < 1e-2);
    assert!(ranking.entries.iter().find(|e| e.feature == "b").unwrap().mi < ranking.mi("a").unwrap() / 50.0);
}

#[test]
fn noise_feature_mi_is_below_epsilon_on_average() {
    let eps = RankConfig::default().epsilon;
    let mean: f64 = (0..20)
        .map(|s| rank_features(&separable_fixture(20_000, s), &RankConfig::default(), 3).unwrap().mi("b").unwrap())
        .sum::<f64>()
        / 20.0;
    // plug-in bias is about (bins - 1) / (2n) = 2.25e-4 nats
    assert!(mean < eps, "mean noise MI {mean}");
}

#[test]
fn duplicate_feature_gets_identical_mi_and_alphabetical_tie_order() {
    let t = separable_fixture(2000, 3);
    let ranking = rank_features(&t, &RankConfig::default(), 3).unwrap();
    let a = ranking.mi("a").unwrap();
    let c = ranking.mi("c").unwrap();
    assert!((a - c).abs() < 1e-12);
    assert_eq!(ranking.entries[0].feature, "a");
    assert_eq!(ranking.entries[1].feature, "c");
}

#[test]
fn ranking_is_a_permutation_with_nonnegative_scores() {
    let t = table1_cohort(5, 0.05);
    let ranking = rank_features(&t, &RankConfig::default(), 17).unwrap();
    assert_eq!(ranking.entries.len(), 17);
    let mut names: Vec<_> = ranking.entries.iter().map(|e| e.feature.clone()).collect();
    names.sort();
    let mut expected = Schema::table1().names();
    expected.sort();
    assert_eq!(names, expected);
    for (i, e) in ranking.entries.iter().enumerate() {
        assert_eq!(e.rank, i + 1);
        assert!(e.mi >= 0.0);
        if i > 0 {
            assert!(ranking.entries[i - 1].mi >= e.mi);
        }
    }
    assert_eq!(ranking.selected.len(), 17);
}

#[test]
fn top_k_larger_than_feature_count_is_clamped() {
    let t = separable_fixture(1000, 1);
    let ranking = rank_features(&t, &RankConfig::default(), 50).unwrap();
    assert!(ranking.selected.len() <= 3);
    assert!(ranking.selected.contains(&"a".to_string()));
}

#[test]
fn continuous_mi_matches_hand_binned_oracle() {
    let t = separable_fixture(3000, 9);
    let ranking = rank_features(&t, &RankConfig::default(), 3).unwrap();
    let a: Vec<f64> = t.column(0).flatten().collect();
    let mut sorted = a.clone();
    sorted.sort_by(f64::total_cmp);
    // independent decile cuts: linear interpolation at positions q·(n−1)
    let cuts: Vec<f64> = (1..10)
        .map(|i| {
            let pos = i as f64 / 10.0 * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            sorted[lo] + (sorted[(lo + 1).min(sorted.len() - 1)] - sorted[lo]) * (pos - lo as f64)
        })
        .collect();
    let codes: Vec<usize> = a.iter().map(|v| cuts.iter().filter(|&&c| c < *v).count()).collect();
    let mut joint = [[0f64; 2]; 10];
    for (&c, &y) in codes.iter().zip(t.labels()) {
        joint[c][y as usize] += 1.0;
    }
    let n = a.len() as f64;
    let py: Vec<f64> = (0..2).map(|y| joint.iter().map(|r| r[y]).sum::<f64>() / n).collect();
    let mut oracle = 0.0;
    for row in &joint {
        let px = (row[0] + row[1]) / n;
        for y in 0..2 {
            let p = row[y] / n;
            if p > 0.0 {
                oracle += p * (p / (px * py[y])).ln();
            }
        }
    }
    assert!((ranking.mi("a").unwrap() - oracle).abs() < 1e-12);
    assert!((mutual_information(&codes, t.labels()).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn coverage_filter_applies_every_rule() {
    let n = reference::COHORT_SIZE;
    let schema = Schema::new(vec![
        FeatureSpec::continuous("ok"),
        FeatureSpec::continuous("sparse"),
        FeatureSpec::continuous("rare"),
        FeatureSpec::continuous("flat"),
    ])
    .unwrap();
    let rows: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            vec![
                Some(i as f64),
                (i % 4 != 0).then_some(i as f64),
                (i < 99).then_some(i as f64),
                Some(2.0),
            ]
        })
        .collect();
    let labels = (0..n).map(|i| u8::from(i % 5 == 0)).collect();
    let t = CohortTable::new(schema, rows, labels).unwrap();
    let report = coverage_filter(&t, &CoverageFilterConfig::default()).unwrap();
    assert_eq!(report.kept, vec!["ok".to_string()]);
    let reasons = |f: &str| report.entries.iter().find(|e| e.feature == f).unwrap().reasons.clone();
    assert_eq!(reasons("sparse"), vec![DropReason::Missingness]);
    assert!(reasons("rare").contains(&DropReason::LowDocumentation));
    assert_eq!(reasons("flat"), vec![DropReason::ZeroVariance]);
}

#[test]
fn selection_report_lists_every_feature() {
    let t = table1_cohort(2, 0.1);
    let coverage = coverage_filter(&t, &CoverageFilterConfig::default()).unwrap();
    assert_eq!(coverage.kept.len(), 17);
    let ranking = rank_features(&t.project(&coverage.kept).unwrap(), &RankConfig::default(), 10).unwrap();
    let mut buf = Vec::new();
    write_selection_report(&mut buf, &coverage, &ranking).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "feature,mi,status,reason");
    assert_eq!(lines.len(), 18);
    assert_eq!(lines.iter().filter(|l| l.contains(",kept,")).count(), ranking.selected.len());
}
