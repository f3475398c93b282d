#![allow(dead_code)]

use chrono::{Duration, TimeZone, Utc};
use regimeclean::clustering::{finalize_model, ModelMetadata, Standardization};
use regimeclean::ingest::{AnomalyInjection, AnomalyKind, ValuePattern};
use regimeclean::model::{DetectorId, Direction, Observation, SegmentKey, TemporalGroup};
use regimeclean::{ClusterModel, ScenarioConfig};

pub const ANOMALY_DETECTOR: &str = "d03";

/// Ten detectors over one week with the three-regime schedule.
pub fn clean_week(seed: u64) -> ScenarioConfig {
    ScenarioConfig::three_regime(seed, 10, 7)
}

/// A stuck-at-full-occupancy cluster holding 3.8% of all rows, 95% of them
/// from one detector.
pub fn anomalous_week(seed: u64) -> ScenarioConfig {
    let mut s = clean_week(seed);
    s.anomalies.push(AnomalyInjection {
        kind: AnomalyKind::AnomalousCluster,
        detector: Some(ANOMALY_DETECTOR.into()),
        fraction: Some(0.038),
        count: None,
        primary_share: Some(0.95),
        pattern: ValuePattern {
            speed: 3.0,
            volume: 1.0,
            occupancy: 99.0,
            sd: [1.0, 0.5, 0.5],
        },
        hours: vec![],
    });
    s
}

/// Hand-built model with centers at speeds 20, 40 and 60, volume 8 and
/// occupancy 10, so the middle center is the midpoint of the outer two.
pub fn line_model() -> ClusterModel {
    let params = Standardization {
        mean: [40.0, 8.0, 10.0],
        sd: [20.0, 2.0, 5.0],
    };
    let centers = [[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
    let training: Vec<[f64; 3]> = (0..60)
        .map(|i| {
            let t = f64::from(i);
            [
                40.0 + 20.0 * (t * 0.7).sin(),
                8.0 + 2.0 * (t * 1.3).cos(),
                10.0 + 5.0 * (t * 0.4).sin(),
            ]
        })
        .collect();
    finalize_model(
        &centers,
        params,
        &training,
        ModelMetadata::describe(&[], TemporalGroup::All),
    )
    .unwrap()
}

pub fn observation(detector: &str, step: i64, f: Option<[f64; 3]>) -> Observation {
    Observation {
        detector_id: DetectorId::from(detector),
        segment: SegmentKey::new("I-5", Direction::North),
        timestamp: Utc.with_ymd_and_hms(2015, 5, 6, 8, 0, 0).unwrap()
            + Duration::seconds(20 * step),
        speed: f.map(|f| f[0]),
        volume: f.map(|f| f[1].round() as u32),
        occupancy: f.map(|f| f[2]),
    }
}

/// Rows that flip between the two outer centers of `line_model` every step.
pub fn alternating_rows(model: &ClusterModel, n: i64) -> Vec<Observation> {
    (0..n)
        .map(|i| {
            observation(
                "d01",
                i,
                Some(model.centers[if i % 2 == 0 { 0 } else { 2 }]),
            )
        })
        .collect()
}

pub fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|j| (a[j] - b[j]).powi(2)).sum::<f64>().sqrt()
}
