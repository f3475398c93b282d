//! End-to-end scenarios on generated data whose truth is known.

mod common;

use common::*;
use regimeclean::anomaly::cluster_report;
use regimeclean::clustering::{fit_partition, FitConfig};
use regimeclean::ingest::{
    generate_synthetic, generate_with_truth, AnomalyInjection, AnomalyKind, ValuePattern,
};
use regimeclean::scoring::score_all;
use regimeclean::traveltime::{
    disagreement_breakdown, first_rule_violation, ground_truth_from_truth, ml_clean, rule_clean,
    travel_times, AgreementFilter, DetectorLayout,
};
use regimeclean::{ScenarioConfig, ScoringConfig, TemporalGroup};

fn fixed_k(k: usize) -> FitConfig {
    FitConfig {
        k: Some(k),
        restarts: 5,
        ..FitConfig::default()
    }
}

#[test]
fn report_recovers_the_injected_cluster() {
    let data = generate_synthetic(&anomalous_week(41)).unwrap();
    let obs = data.observations();
    let model = fit_partition(obs, TemporalGroup::All, &fixed_k(4))
        .unwrap()
        .model;
    let rep = cluster_report(&model, &score_all(obs, &model, &ScoringConfig::default())).unwrap();
    // The injected cluster is the only one centered near full occupancy.
    let bad = rep
        .clusters
        .iter()
        .max_by(|a, b| a.center[2].total_cmp(&b.center[2]))
        .unwrap();
    let share = bad.top_share.unwrap();
    assert!(
        (bad.fraction - 0.038).abs() < 0.002,
        "fraction {}",
        bad.fraction
    );
    assert!(share >= 0.95, "share {share}");
    assert_eq!(
        bad.top_detector.as_ref().unwrap().as_str(),
        ANOMALY_DETECTOR
    );
}

#[test]
fn uniform_detector_mix_has_no_dominant_detector() {
    let data = generate_synthetic(&clean_week(42)).unwrap();
    let obs = data.observations();
    let model = fit_partition(obs, TemporalGroup::All, &fixed_k(3))
        .unwrap()
        .model;
    let rep = cluster_report(&model, &score_all(obs, &model, &ScoringConfig::default())).unwrap();
    for c in &rep.clusters {
        let share = c.top_share.unwrap();
        assert!(
            (share - 0.1).abs() < 0.01,
            "cluster {} share {share}",
            c.index
        );
    }
}

/// One detector intermittently reports a slow, nearly empty road during the
/// evening peak. Every such reading passes the threshold rules.
fn bad_detector(seed: u64) -> ScenarioConfig {
    let mut s = clean_week(seed);
    s.anomalies.push(AnomalyInjection {
        kind: AnomalyKind::PointOutlier,
        detector: Some("d02".into()),
        fraction: Some(0.004),
        count: None,
        primary_share: None,
        pattern: ValuePattern {
            speed: 12.0,
            volume: 1.0,
            occupancy: 2.0,
            sd: [2.0, 0.5, 0.5],
        },
        hours: vec![[15, 19]],
    });
    s
}

#[test]
fn distance_cleaning_is_closer_when_a_detector_lies() {
    let data = generate_with_truth(&bad_detector(43)).unwrap();
    let obs = data.dataset.observations();
    let injected: Vec<_> = obs
        .iter()
        .zip(&data.truth)
        .filter(|(_, t)| t.injected.is_some())
        .collect();
    assert!(!injected.is_empty());
    assert!(injected
        .iter()
        .all(|(o, _)| first_rule_violation(o).is_none()));
    let layout = DetectorLayout::uniform(data.dataset.detectors(), 0.5).unwrap();
    let gt = ground_truth_from_truth(&layout, obs, &data.truth);
    let model = fit_partition(obs, TemporalGroup::All, &fixed_k(3))
        .unwrap()
        .model;
    let scored = score_all(obs, &model, &ScoringConfig::default());
    let rule = travel_times(&layout, &rule_clean(obs), 5);
    let ml = travel_times(&layout, &ml_clean(&scored.rows, 2.5), 5);
    let b = disagreement_breakdown(&rule, &ml, &gt, &AgreementFilter::default()).unwrap();
    assert!(b.ml_closer_share > 0.5, "{b:?}");
}

#[test]
fn documented_example_scenario_is_valid() {
    let text = include_str!("../../../docs/scenario-example.toml");
    let s = ScenarioConfig::from_toml_str(text).unwrap();
    s.validate().unwrap();
    assert_eq!(s.detectors.len(), 10);
    assert_eq!(s.anomalies.len(), 3);
}
