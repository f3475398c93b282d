//! Cluster review: per-cluster membership and detector concentration, rules
//! that flag clusters made of bad data, and a drift metric between the center
//! sets of two models.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::clustering::{
    fit_standardized, standardize, ClusterModel, FitConfig, FitOutcome, ModelMetadata,
    Standardization,
};
use crate::error::{Error, Result};
use crate::io::FORMAT_VERSION;
use crate::model::{DetectorId, Observation, TemporalGroup};
use crate::scoring::{score_all, ScoredSet, ScoringConfig};

/// A rule that fired on a cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flag {
    pub rule: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub index: usize,
    /// Raw-unit center.
    pub center: [f64; 3],
    pub count: usize,
    pub fraction: f64,
    /// Detector contributing the most members; the smallest id wins ties.
    pub top_detector: Option<DetectorId>,
    pub top_share: Option<f64>,
    pub flags: Vec<Flag>,
}

impl ClusterSummary {
    pub fn is_flagged(&self) -> bool {
        !self.flags.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub format_version: u32,
    pub model_fingerprint: String,
    pub scored: usize,
    pub unscoreable: usize,
    pub clusters: Vec<ClusterSummary>,
}

impl ClusterReport {
    pub fn flagged(&self) -> impl Iterator<Item = &ClusterSummary> {
        self.clusters.iter().filter(|c| c.is_flagged())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Counts members per cluster and how concentrated each cluster is on one detector.
pub fn cluster_report(model: &ClusterModel, scored: &ScoredSet) -> Result<ClusterReport> {
    if scored.model_fingerprint != model.fingerprint {
        return Err(Error::ModelMismatch {
            expected: model.fingerprint.clone(),
            found: scored.model_fingerprint.clone(),
        });
    }
    let mut members: Vec<BTreeMap<&DetectorId, usize>> = vec![BTreeMap::new(); model.k()];
    let mut unscoreable = 0;
    for row in &scored.rows {
        match &row.score {
            Ok(s) => {
                *members[s.regime_index]
                    .entry(&row.observation.detector_id)
                    .or_default() += 1
            }
            Err(_) => unscoreable += 1,
        }
    }
    let total: usize = members.iter().flat_map(|m| m.values()).sum();
    let clusters = members
        .iter()
        .enumerate()
        .map(|(index, by_det)| {
            let count: usize = by_det.values().sum();
            // Iteration is id-ordered, so the strict comparison keeps the smallest id on ties.
            let top =
                by_det.iter().fold(
                    None,
                    |best: Option<(&DetectorId, usize)>, (d, n)| match best {
                        Some((_, m)) if m >= *n => best,
                        _ => Some((*d, *n)),
                    },
                );
            ClusterSummary {
                index,
                center: model.centers[index],
                count,
                fraction: if total == 0 {
                    0.0
                } else {
                    count as f64 / total as f64
                },
                top_detector: top.map(|(d, _)| d.clone()),
                top_share: top.map(|(_, n)| n as f64 / count as f64),
                flags: Vec::new(),
            }
        })
        .collect();
    Ok(ClusterReport {
        format_version: FORMAT_VERSION,
        model_fingerprint: model.fingerprint.clone(),
        scored: total,
        unscoreable,
        clusters,
    })
}

/// Thresholds for the anomalous-cluster rules. A disabled rule never fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlagRules {
    pub stuck_high_occupancy: Option<StuckOccupancyRule>,
    pub single_detector: Option<SingleDetectorRule>,
}

/// Center occupancy at least `min_occupancy` while center speed is at most `max_speed`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StuckOccupancyRule {
    pub min_occupancy: f64,
    pub max_speed: f64,
}

/// One detector supplies at least `min_share` of a cluster holding at least
/// `min_fraction` of the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleDetectorRule {
    pub min_share: f64,
    pub min_fraction: f64,
}

pub const RULE_STUCK_HIGH_OCCUPANCY: &str = "stuck_high_occupancy";
pub const RULE_SINGLE_DETECTOR: &str = "single_detector_dominated";

impl Default for FlagRules {
    fn default() -> Self {
        FlagRules {
            stuck_high_occupancy: Some(StuckOccupancyRule {
                min_occupancy: 90.0,
                max_speed: 10.0,
            }),
            single_detector: Some(SingleDetectorRule {
                min_share: 0.9,
                min_fraction: 0.01,
            }),
        }
    }
}

/// Replaces every cluster's flags with the rules that fire on it.
pub fn flag_anomalous_clusters(mut report: ClusterReport, rules: &FlagRules) -> ClusterReport {
    for c in &mut report.clusters {
        c.flags.clear();
        let [speed, _, occupancy] = c.center;
        if let Some(r) = rules.stuck_high_occupancy {
            if occupancy >= r.min_occupancy && speed <= r.max_speed {
                c.flags.push(Flag {
                    rule: RULE_STUCK_HIGH_OCCUPANCY.into(),
                    reason: format!("center occupancy {occupancy:.1} with speed {speed:.1}"),
                });
            }
        }
        if let (Some(r), Some(share), Some(det)) =
            (rules.single_detector, c.top_share, &c.top_detector)
        {
            if share >= r.min_share && c.fraction >= r.min_fraction {
                c.flags.push(Flag {
                    rule: RULE_SINGLE_DETECTOR.into(),
                    reason: format!(
                        "{det} supplies {:.1}% of a cluster holding {:.2}% of rows",
                        share * 100.0,
                        c.fraction * 100.0
                    ),
                });
            }
        }
    }
    report
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftMode {
    /// Sum over A of the distance to the closest center of B.
    #[default]
    Directional,
    /// The larger of the A→B and B→A sums.
    Symmetric,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftResult {
    pub value: f64,
    /// One entry per center of the summed-over set.
    pub contributions: Vec<f64>,
    /// Index of the closest center in the other set, per contribution.
    pub matched: Vec<usize>,
    /// `true` when the reported sum runs B→A (symmetric mode only).
    pub reversed: bool,
    /// Describes the standardization the distances are measured in.
    pub baseline: String,
}

/// Directional A→B drift of raw-unit centers, measured in `basis` units.
pub fn cluster_set_distance(
    a: &[[f64; 3]],
    b: &[[f64; 3]],
    basis: &Standardization,
    baseline: impl Into<String>,
) -> Result<DriftResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyCenterSet);
    }
    let zb: Vec<[f64; 3]> = b.iter().map(|c| basis.apply(c)).collect();
    let mut contributions = Vec::with_capacity(a.len());
    let mut matched = Vec::with_capacity(a.len());
    for ca in a {
        let za = basis.apply(ca);
        let (idx, d) = zb
            .iter()
            .map(|zb| (0..3).map(|j| (za[j] - zb[j]).powi(2)).sum::<f64>().sqrt())
            .enumerate()
            .fold(
                (0, f64::INFINITY),
                |best, (i, d)| if d < best.1 { (i, d) } else { best },
            );
        contributions.push(d);
        matched.push(idx);
    }
    Ok(DriftResult {
        value: contributions.iter().sum(),
        contributions,
        matched,
        reversed: false,
        baseline: baseline.into(),
    })
}

/// Drift from model `a` to model `b`, in `a`'s standardized units.
pub fn model_drift(a: &ClusterModel, b: &ClusterModel, mode: DriftMode) -> Result<DriftResult> {
    let baseline = format!("{} ({})", a.metadata.label(), a.fingerprint);
    let forward =
        cluster_set_distance(&a.centers, &b.centers, &a.standardization, baseline.clone())?;
    if mode == DriftMode::Directional {
        return Ok(forward);
    }
    let mut backward = cluster_set_distance(&b.centers, &a.centers, &a.standardization, baseline)?;
    if backward.value > forward.value {
        backward.reversed = true;
        Ok(backward)
    } else {
        Ok(forward)
    }
}

/// One row of a drift history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftRecord {
    pub period_a: String,
    pub period_b: String,
    pub value: f64,
}

/// Fits `k_base + 1` regimes, scores the partition against the new model and
/// returns the flagged cluster report alongside it.
pub fn refit_with_extra_cluster(
    observations: &[Observation],
    group: TemporalGroup,
    k_base: usize,
    fit: &FitConfig,
    scoring: &ScoringConfig,
    rules: &FlagRules,
) -> Result<(FitOutcome, ClusterReport)> {
    let data = standardize(observations)?;
    let cfg = FitConfig {
        k: Some(k_base + 1),
        ..*fit
    };
    let outcome = fit_standardized(&data, ModelMetadata::describe(observations, group), &cfg)?;
    let scored = score_all(observations, &outcome.model, scoring);
    let report = flag_anomalous_clusters(cluster_report(&outcome.model, &scored)?, rules);
    Ok((outcome, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, ScenarioConfig};
    use crate::model::{Direction, SegmentKey};
    use crate::scoring::{assign_and_score, DistanceBand, Score, ScoredObservation};
    use chrono::{TimeZone, Utc};

    fn unit() -> Standardization {
        Standardization {
            mean: [0.0; 3],
            sd: [1.0; 3],
        }
    }

    fn summary(center: [f64; 3], fraction: f64, share: f64) -> ClusterSummary {
        ClusterSummary {
            index: 0,
            center,
            count: 100,
            fraction,
            top_detector: Some("d01".into()),
            top_share: Some(share),
            flags: vec![],
        }
    }

    fn report_of(clusters: Vec<ClusterSummary>) -> ClusterReport {
        ClusterReport {
            format_version: FORMAT_VERSION,
            model_fingerprint: String::new(),
            scored: 0,
            unscoreable: 0,
            clusters,
        }
    }

    #[test]
    fn drift_identity_and_three_four_five() {
        let a = [[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]];
        let r = cluster_set_distance(&a, &a, &unit(), "unit").unwrap();
        assert_eq!(r.value, 0.0);
        let r = cluster_set_distance(&[[0.0; 3]], &[[3.0, 4.0, 0.0]], &unit(), "unit").unwrap();
        assert_eq!(r.value, 5.0);
        assert_eq!(r.contributions, vec![5.0]);
    }

    #[test]
    fn drift_is_directional_and_measured_in_basis_units() {
        let a = [[0.0; 3]];
        let b = [[0.0; 3], [10.0, 0.0, 0.0]];
        assert_eq!(
            cluster_set_distance(&a, &b, &unit(), "").unwrap().value,
            0.0
        );
        assert_eq!(
            cluster_set_distance(&b, &a, &unit(), "").unwrap().value,
            10.0
        );
        let basis = Standardization {
            mean: [7.0, 0.0, 0.0],
            sd: [2.0, 1.0, 1.0],
        };
        assert_eq!(cluster_set_distance(&b, &a, &basis, "").unwrap().value, 5.0);
    }

    #[test]
    fn moving_a_matched_center_away_increases_drift() {
        let a = [[0.0; 3], [5.0, 5.0, 5.0]];
        let mut b = [[0.1, 0.0, 0.0], [5.0, 5.0, 5.2]];
        let before = cluster_set_distance(&a, &b, &unit(), "").unwrap().value;
        b[1][2] += 0.5;
        let after = cluster_set_distance(&a, &b, &unit(), "").unwrap().value;
        assert!(after > before);
    }

    #[test]
    fn empty_center_set() {
        assert!(matches!(
            cluster_set_distance(&[], &[[0.0; 3]], &unit(), ""),
            Err(Error::EmptyCenterSet)
        ));
    }

    #[test]
    fn stuck_occupancy_rule() {
        let r = flag_anomalous_clusters(
            report_of(vec![summary([2.0, 1.0, 100.0], 0.001, 0.2)]),
            &FlagRules::default(),
        );
        let rules: Vec<_> = r.clusters[0]
            .flags
            .iter()
            .map(|f| f.rule.as_str())
            .collect();
        assert_eq!(rules, [RULE_STUCK_HIGH_OCCUPANCY]);
    }

    #[test]
    fn free_flow_mixed_is_not_flagged() {
        let r = flag_anomalous_clusters(
            report_of(vec![summary([60.0, 8.0, 9.0], 0.4, 0.12)]),
            &FlagRules::default(),
        );
        assert!(!r.clusters[0].is_flagged());
    }

    #[test]
    fn dominated_cluster_rule() {
        let r = flag_anomalous_clusters(
            report_of(vec![summary([40.0, 8.0, 20.0], 0.038, 0.95)]),
            &FlagRules::default(),
        );
        let rules: Vec<_> = r.clusters[0]
            .flags
            .iter()
            .map(|f| f.rule.as_str())
            .collect();
        assert_eq!(rules, [RULE_SINGLE_DETECTOR]);
        // Below the size floor the same concentration is ignored.
        let r = flag_anomalous_clusters(
            report_of(vec![summary([40.0, 8.0, 20.0], 0.005, 1.0)]),
            &FlagRules::default(),
        );
        assert!(!r.clusters[0].is_flagged());
    }

    #[test]
    fn flags_are_deterministic_and_replace_old_ones() {
        let rep = report_of(vec![summary([2.0, 1.0, 100.0], 0.05, 0.99)]);
        let once = flag_anomalous_clusters(rep, &FlagRules::default());
        let twice = flag_anomalous_clusters(once.clone(), &FlagRules::default());
        assert_eq!(once, twice);
        assert_eq!(once.clusters[0].flags.len(), 2);
    }

    fn scored_row(det: &str, regime: usize) -> ScoredObservation {
        ScoredObservation {
            observation: Observation {
                detector_id: det.into(),
                segment: SegmentKey::new("I-5", Direction::North),
                timestamp: Utc.with_ymd_and_hms(2015, 5, 6, 0, 0, 0).unwrap(),
                speed: Some(50.0),
                volume: Some(5),
                occupancy: Some(10.0),
            },
            score: Ok(Score {
                regime_index: regime,
                distance: 0.0,
                band: DistanceBand::Good,
                is_outlier: false,
            }),
        }
    }

    fn small_model() -> ClusterModel {
        let obs = generate_synthetic(&ScenarioConfig::three_regime(1, 1, 1)).unwrap();
        let cfg = FitConfig {
            k: Some(3),
            restarts: 2,
            ..FitConfig::default()
        };
        crate::clustering::fit_partition(obs.observations(), TemporalGroup::All, &cfg)
            .unwrap()
            .model
    }

    #[test]
    fn report_counts_shares_and_conservation() {
        let model = small_model();
        let mut rows = Vec::new();
        for i in 0..10 {
            rows.push(scored_row(&format!("d{i:02}"), 0));
        }
        for _ in 0..4 {
            rows.push(scored_row("d07", 2));
        }
        let mut missing = scored_row("d01", 0);
        missing.score = Err("speed");
        rows.push(missing);
        let set = ScoredSet {
            model_fingerprint: model.fingerprint.clone(),
            rows,
        };
        let r = cluster_report(&model, &set).unwrap();
        assert_eq!(r.scored, 14);
        assert_eq!(r.unscoreable, 1);
        assert_eq!(r.clusters.iter().map(|c| c.count).sum::<usize>(), 14);
        assert!((r.clusters.iter().map(|c| c.fraction).sum::<f64>() - 1.0).abs() < 1e-12);
        assert_eq!(r.clusters[0].top_share, Some(0.1));
        assert_eq!(r.clusters[0].top_detector, Some("d00".into()));
        assert_eq!(r.clusters[1].top_share, None);
        assert_eq!(r.clusters[2].top_share, Some(1.0));
        assert_eq!(r.clusters[2].top_detector, Some("d07".into()));
    }

    #[test]
    fn report_rejects_foreign_scores() {
        let model = small_model();
        let set = ScoredSet {
            model_fingerprint: "0000".into(),
            rows: vec![],
        };
        assert!(matches!(
            cluster_report(&model, &set),
            Err(Error::ModelMismatch { .. })
        ));
    }

    #[test]
    fn symmetric_mode_takes_the_larger_direction() {
        let model = small_model();
        let mut other = model.clone();
        other.centers.push([5.0, 1.0, 99.0]);
        let fwd = model_drift(&model, &other, DriftMode::Directional).unwrap();
        let sym = model_drift(&model, &other, DriftMode::Symmetric).unwrap();
        assert_eq!(fwd.value, 0.0);
        assert!(sym.reversed && sym.value > 0.0);
        assert_eq!(sym.value, sym.contributions.iter().sum::<f64>());
    }

    #[test]
    fn single_blob_split_in_two_is_not_flagged() {
        let mut cfg = ScenarioConfig::three_regime(9, 2, 1);
        cfg.regimes.truncate(1);
        cfg.regimes[0].weight = 1.0;
        cfg.regimes[0].hours.clear();
        let data = generate_synthetic(&cfg).unwrap();
        let fit = FitConfig {
            restarts: 2,
            ..FitConfig::default()
        };
        let (out, report) = refit_with_extra_cluster(
            data.observations(),
            TemporalGroup::All,
            1,
            &fit,
            &ScoringConfig::default(),
            &FlagRules::default(),
        )
        .unwrap();
        assert_eq!(out.model.k(), 2);
        assert_eq!(report.flagged().count(), 0);
        let one = assign_and_score(
            &data.observations()[0],
            &out.model,
            &ScoringConfig::default(),
        );
        assert!(one.score.is_ok());
    }
}
