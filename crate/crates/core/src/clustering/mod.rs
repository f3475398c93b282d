//! Regime models: K-means on z-scored `(speed, volume, occupancy)`.
//!
//! Fitting runs on standardized features so that no single unit dominates;
//! the persisted model reports centers back in raw units, sorted by speed so
//! index 0 is always the slowest regime.

mod kmeans;
mod knee;
mod standardize;

use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::synthetic::hex_digest;
use crate::io::FORMAT_VERSION;
use crate::model::{Observation, SegmentKey, TemporalGroup, FEATURE_NAMES};
use crate::scoring::{estimate_covariance, invert_regularized, Mat3};

pub use kmeans::{
    distinct_count, kmeans_fit, kmeans_plus_plus, lloyd, KMeansConfig, KMeansFit, LloydRun, Point,
};
pub use knee::{chord_distances, elbow_sweep, select_k_knee, ElbowCurve, ElbowPoint};
pub use standardize::{standardize, standardize_points, Standardization, Standardized};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub segment: Option<SegmentKey>,
    pub temporal_group: TemporalGroup,
    pub date_range: Option<[DateTime<Utc>; 2]>,
    pub seed: u64,
    pub restarts: usize,
    pub training_rows: usize,
    pub excluded_missing: usize,
    pub avg_sq_error: f64,
}

impl ModelMetadata {
    /// Metadata derived from the observations a model is trained on.
    pub fn describe(observations: &[Observation], group: TemporalGroup) -> Self {
        let first = observations.first().map(|o| &o.segment);
        let segment = first
            .filter(|s| observations.iter().all(|o| &&o.segment == s))
            .cloned();
        let date_range = observations.iter().map(|o| o.timestamp).fold(
            None,
            |acc: Option<[DateTime<Utc>; 2]>, t| match acc {
                None => Some([t, t]),
                Some([a, b]) => Some([a.min(t), b.max(t)]),
            },
        );
        ModelMetadata {
            segment,
            temporal_group: group,
            date_range,
            seed: 0,
            restarts: 0,
            training_rows: 0,
            excluded_missing: 0,
            avg_sq_error: 0.0,
        }
    }

    pub fn label(&self) -> String {
        let seg = self
            .segment
            .as_ref()
            .map(|s| s.to_string())
            .unwrap_or_else(|| "mixed".into());
        let range = self
            .date_range
            .map(|[a, b]| format!("{}..{}", a.format("%Y-%m-%d"), b.format("%Y-%m-%d")))
            .unwrap_or_else(|| "-".into());
        format!("{seg} {} {range}", self.temporal_group)
    }
}

/// A fitted regime model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub format_version: u32,
    pub feature_order: [String; 3],
    pub standardization: Standardization,
    /// Raw-unit centers, ascending by speed.
    pub centers: Vec<[f64; 3]>,
    /// The same centers in standardized units.
    pub centers_std: Vec<[f64; 3]>,
    /// Sample covariance of the raw training features.
    pub covariance: [[f64; 3]; 3],
    /// Inverse of `covariance + ridge * I`.
    pub inverse_covariance: [[f64; 3]; 3],
    pub ridge: f64,
    pub metadata: ModelMetadata,
    /// SHA-256 prefix over every other field.
    #[serde(default)]
    pub fingerprint: String,
}

fn to_array(m: &Mat3) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| m[(i, j)]))
}

fn from_array(a: &[[f64; 3]; 3]) -> Mat3 {
    Mat3::from_fn(|i, j| a[i][j])
}

impl ClusterModel {
    pub fn k(&self) -> usize {
        self.centers.len()
    }

    pub fn covariance(&self) -> Mat3 {
        from_array(&self.covariance)
    }

    pub fn inverse_covariance(&self) -> Mat3 {
        from_array(&self.inverse_covariance)
    }

    fn compute_fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.fingerprint.clear();
        let bytes = serde_json::to_vec(&copy).expect("model serializes");
        hex_digest(&bytes)[..16].to_owned()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: ClusterModel = serde_json::from_str(text)?;
        if model.format_version != FORMAT_VERSION {
            return Err(Error::UnsupportedFormat(model.format_version));
        }
        if model
            .feature_order
            .iter()
            .map(String::as_str)
            .ne(FEATURE_NAMES)
        {
            return Err(Error::InvalidConfig(format!(
                "model feature order {:?} is not {:?}",
                model.feature_order, FEATURE_NAMES
            )));
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json();
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::FileUnreadable {
            path: path.to_owned(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Assembles a persisted model: de-standardizes and speed-sorts the centers
/// and attaches the training covariance and its regularized inverse.
pub fn finalize_model(
    centers_std: &[[f64; 3]],
    params: Standardization,
    training_raw: &[[f64; 3]],
    metadata: ModelMetadata,
) -> Result<ClusterModel> {
    let mut pairs: Vec<([f64; 3], [f64; 3])> =
        centers_std.iter().map(|z| (params.invert(z), *z)).collect();
    pairs.sort_by(|a, b| a.0[0].total_cmp(&b.0[0]));
    let covariance = estimate_covariance(training_raw)?;
    let inv = invert_regularized(&covariance)?;
    let mut model = ClusterModel {
        format_version: FORMAT_VERSION,
        feature_order: FEATURE_NAMES.map(str::to_owned),
        standardization: params,
        centers: pairs.iter().map(|p| p.0).collect(),
        centers_std: pairs.iter().map(|p| p.1).collect(),
        covariance: to_array(&covariance),
        inverse_covariance: to_array(&inv.inverse),
        ridge: inv.ridge,
        metadata,
        fingerprint: String::new(),
    };
    model.fingerprint = model.compute_fingerprint();
    Ok(model)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Fixed cluster count; when absent the knee of the elbow sweep decides.
    pub k: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub seed: u64,
    pub restarts: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            k: None,
            k_min: 1,
            k_max: 10,
            seed: 0,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub model: ClusterModel,
    /// Present when k came from the knee heuristic.
    pub curve: Option<ElbowCurve>,
}

/// Standardize, pick k, run K-means and finalize, all on one partition.
pub fn fit_partition(
    observations: &[Observation],
    group: TemporalGroup,
    config: &FitConfig,
) -> Result<FitOutcome> {
    let data = standardize(observations)?;
    fit_standardized(&data, ModelMetadata::describe(observations, group), config)
}

pub fn fit_standardized(
    data: &Standardized,
    mut metadata: ModelMetadata,
    config: &FitConfig,
) -> Result<FitOutcome> {
    let curve = match config.k {
        Some(_) => None,
        None => Some(elbow_sweep(
            &data.points,
            config.k_min,
            config.k_max,
            config.seed,
            config.restarts,
        )?),
    };
    let k = match (&curve, config.k) {
        (_, Some(k)) => k,
        (Some(c), None) => select_k_knee(c, None)?,
        (None, None) => unreachable!(),
    };
    let km = KMeansConfig::new(k, config.seed).with_restarts(config.restarts);
    let fit = kmeans_fit(&data.points, &km)?;
    metadata.seed = config.seed;
    metadata.restarts = config.restarts;
    metadata.training_rows = data.points.len();
    metadata.excluded_missing = data.excluded_missing;
    metadata.avg_sq_error = fit.avg_sq_error;
    let model = finalize_model(&fit.centers, data.params, &data.raw, metadata)?;
    Ok(FitOutcome { model, curve })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, ScenarioConfig};

    fn params() -> Standardization {
        Standardization {
            mean: [50.0, 8.0, 10.0],
            sd: [10.0, 2.0, 5.0],
        }
    }

    fn raw_training() -> Vec<[f64; 3]> {
        (0..40)
            .map(|i| {
                let t = i as f64;
                [
                    50.0 + 10.0 * (t * 0.3).sin(),
                    8.0 + 2.0 * (t * 0.9).cos(),
                    10.0 + (t % 7.0),
                ]
            })
            .collect()
    }

    #[test]
    fn centers_come_out_speed_ascending() {
        // Raw speeds 55, 20, 61.
        let centers_std = [[0.5, 0.0, 0.0], [-3.0, 1.0, 2.0], [1.1, -1.0, 0.0]];
        let model = finalize_model(
            &centers_std,
            params(),
            &raw_training(),
            ModelMetadata::describe(&[], TemporalGroup::All),
        )
        .unwrap();
        let speeds: Vec<f64> = model.centers.iter().map(|c| c[0]).collect();
        assert_eq!(speeds, vec![20.0, 55.0, 61.0]);
        assert_eq!(model.centers_std[0], [-3.0, 1.0, 2.0]);
        let dev = (model.covariance() * model.inverse_covariance() - Mat3::identity())
            .abs()
            .max();
        assert!(dev <= 1e-8);
        assert_eq!(model.covariance(), model.covariance().transpose());
    }

    #[test]
    fn k1_model_center_is_the_raw_mean() {
        let obs = generate_synthetic(&ScenarioConfig::three_regime(3, 2, 1)).unwrap();
        let cfg = FitConfig {
            k: Some(1),
            restarts: 2,
            ..FitConfig::default()
        };
        let out = fit_partition(obs.observations(), TemporalGroup::All, &cfg).unwrap();
        let mean = out.model.standardization.mean;
        for j in 0..3 {
            assert!((out.model.centers[0][j] - mean[j]).abs() < 1e-9);
        }
        assert!(out.curve.is_none());
    }

    #[test]
    fn json_round_trip_is_exact() {
        let obs = generate_synthetic(&ScenarioConfig::three_regime(4, 2, 1)).unwrap();
        let cfg = FitConfig {
            k: Some(3),
            restarts: 3,
            seed: 5,
            ..FitConfig::default()
        };
        let model = fit_partition(obs.observations(), TemporalGroup::All, &cfg)
            .unwrap()
            .model;
        let back = ClusterModel::from_json(&model.to_json()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.compute_fingerprint(), model.fingerprint);
    }

    #[test]
    fn rejects_other_format_versions() {
        let obs = generate_synthetic(&ScenarioConfig::three_regime(4, 1, 1)).unwrap();
        let cfg = FitConfig {
            k: Some(2),
            restarts: 1,
            ..FitConfig::default()
        };
        let mut model = fit_partition(obs.observations(), TemporalGroup::All, &cfg)
            .unwrap()
            .model;
        model.format_version = 99;
        assert!(matches!(
            ClusterModel::from_json(&model.to_json()),
            Err(Error::UnsupportedFormat(99))
        ));
    }
}
