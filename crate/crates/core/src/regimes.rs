//! Per-detector regime time series, raw and smoothed.
//!
//! Smoothing averages the raw feature vectors over a window of observations
//! and re-assigns the averaged vector, rather than voting over labels.

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::model::{DetectorId, FeatureVector, Observation};
use crate::scoring::{score_vector, ScoredObservation, ScoringConfig};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesEntry {
    pub timestamp: DateTime<Utc>,
    /// `None` marks an unscoreable position.
    pub regime_index: Option<usize>,
    pub distance: Option<f64>,
}

/// A maximal run of unscoreable positions, by first and last timestamp.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSeries {
    pub detector_id: DetectorId,
    pub entries: Vec<SeriesEntry>,
    pub gaps: Vec<Gap>,
}

impl RegimeSeries {
    fn from_entries(detector_id: DetectorId, entries: Vec<SeriesEntry>) -> Self {
        let mut gaps: Vec<Gap> = Vec::new();
        let mut open = false;
        for e in &entries {
            match (e.regime_index, open) {
                (None, false) => {
                    gaps.push(Gap {
                        start: e.timestamp,
                        end: e.timestamp,
                    });
                    open = true;
                }
                (None, true) => gaps.last_mut().expect("gap is open").end = e.timestamp,
                (Some(_), _) => open = false,
            }
        }
        RegimeSeries {
            detector_id,
            entries,
            gaps,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Regime changes between consecutive scoreable positions; gaps are skipped over.
    pub fn transitions(&self) -> usize {
        let labels = self.entries.iter().filter_map(|e| e.regime_index);
        labels
            .clone()
            .zip(labels.skip(1))
            .filter(|(a, b)| a != b)
            .count()
    }
}

/// Keeps the first row at each timestamp so the series is strictly increasing.
fn time_ordered<'a, T>(
    rows: impl Iterator<Item = &'a T>,
    ts: impl Fn(&T) -> DateTime<Utc>,
) -> Vec<&'a T> {
    let mut rows: Vec<&T> = rows.collect();
    rows.sort_by_key(|r| ts(r));
    rows.dedup_by_key(|r| ts(r));
    rows
}

/// The scored regime of each of one detector's observations, in time order.
pub fn regime_series(scored: &[ScoredObservation], detector: &DetectorId) -> RegimeSeries {
    let rows = time_ordered(
        scored
            .iter()
            .filter(|s| &s.observation.detector_id == detector),
        |s| s.observation.timestamp,
    );
    let entries = rows
        .into_iter()
        .map(|s| SeriesEntry {
            timestamp: s.observation.timestamp,
            regime_index: s.score().map(|x| x.regime_index),
            distance: s.score().map(|x| x.distance),
        })
        .collect();
    RegimeSeries::from_entries(detector.clone(), entries)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub window: usize,
    /// Center the window on each position instead of trailing it.
    pub centered: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        SmoothingConfig {
            window: 5,
            centered: false,
        }
    }
}

/// Assigns each position the regime of its window's mean raw feature vector.
/// Windows shrink at the series edges and skip incomplete rows; a window with
/// no complete row is a gap.
pub fn smooth_series(
    observations: &[Observation],
    detector: &DetectorId,
    model: &ClusterModel,
    scoring: &ScoringConfig,
    smoothing: &SmoothingConfig,
) -> RegimeSeries {
    let w = smoothing.window.max(1);
    let rows = time_ordered(
        observations.iter().filter(|o| &o.detector_id == detector),
        |o| o.timestamp,
    );
    let features: Vec<Option<FeatureVector>> = rows.iter().map(|o| o.features().ok()).collect();
    let (back, ahead) = if smoothing.centered {
        ((w - 1) / 2, w / 2)
    } else {
        (w - 1, 0)
    };
    let entries = rows
        .iter()
        .enumerate()
        .map(|(i, o)| {
            let lo = i.saturating_sub(back);
            let hi = (i + ahead).min(rows.len() - 1);
            let valid: Vec<&FeatureVector> = features[lo..=hi].iter().flatten().collect();
            let score = (!valid.is_empty()).then(|| {
                let n = valid.len() as f64;
                let mean = std::array::from_fn(|j| valid.iter().map(|f| f.0[j]).sum::<f64>() / n);
                score_vector(&FeatureVector(mean), model, scoring)
            });
            SeriesEntry {
                timestamp: o.timestamp,
                regime_index: score.map(|s| s.regime_index),
                distance: score.map(|s| s.distance),
            }
        })
        .collect();
    RegimeSeries::from_entries(detector.clone(), entries)
}
