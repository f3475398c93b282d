//! Covariance estimation, Mahalanobis distance and regime assignment.
//!
//! A model carries one covariance matrix for its whole training partition.
//! Every observation is assigned to the center at the smallest Mahalanobis
//! distance under that matrix, and the distance to that center is its score.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::model::{FeatureVector, Observation};

pub type Mat3 = Matrix3<f64>;

/// Ridge values tried in order by [`invert_regularized`].
pub const RIDGE_SCHEDULE: [f64; 4] = [0.0, 1e-9, 1e-6, 1e-3];

/// Largest condition number accepted for an inverted covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// Largest entry of `(m + ridge * I) * inverse - I` accepted.
pub const MAX_RESIDUAL: f64 = 1e-8;

/// Sample covariance (divisor `n - 1`) of raw feature vectors.
pub fn estimate_covariance(points: &[[f64; 3]]) -> Result<Mat3> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints(n));
    }
    let mut mean = [0.0; 3];
    for p in points {
        for j in 0..3 {
            mean[j] += p[j];
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);

    let mut cov = Mat3::zeros();
    for p in points {
        let d = [p[0] - mean[0], p[1] - mean[1], p[2] - mean[2]];
        for i in 0..3 {
            for j in i..3 {
                cov[(i, j)] += d[i] * d[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..3 {
        for j in i..3 {
            cov[(i, j)] /= denom;
            cov[(j, i)] = cov[(i, j)];
        }
    }
    Ok(cov)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedInverse {
    pub inverse: Mat3,
    /// Ridge actually added to the diagonal before inverting.
    pub ridge: f64,
    pub condition: f64,
}

/// Inverts `m + ridge * I` with the smallest ridge from [`RIDGE_SCHEDULE`]
/// whose condition number is below [`MAX_CONDITION`] and whose computed
/// inverse reproduces the identity to within [`MAX_RESIDUAL`].
pub fn invert_regularized(m: &Mat3) -> Result<RegularizedInverse> {
    let sym = (m + m.transpose()) * 0.5;
    if !sym.iter().all(|v| v.is_finite()) {
        return Err(Error::NotInvertible(0.0));
    }
    for ridge in RIDGE_SCHEDULE {
        let a = sym + Mat3::identity() * ridge;
        let eig = SymmetricEigen::new(a);
        let abs = eig.eigenvalues.map(f64::abs);
        let (lo, hi) = (abs.min(), abs.max());
        if lo == 0.0 || !(hi / lo < MAX_CONDITION) {
            continue;
        }
        let mut inv = match a.cholesky() {
            Some(ch) => ch.inverse(),
            None => match a.try_inverse() {
                Some(inv) => inv,
                None => continue,
            },
        };
        // One Newton-Schulz refinement step, then restore exact symmetry.
        inv = inv + inv * (Mat3::identity() - a * inv);
        inv = (inv + inv.transpose()) * 0.5;
        if (a * inv - Mat3::identity()).abs().max() > MAX_RESIDUAL {
            continue;
        }
        return Ok(RegularizedInverse {
            inverse: inv,
            ridge,
            condition: hi / lo,
        });
    }
    Err(Error::NotInvertible(
        RIDGE_SCHEDULE[RIDGE_SCHEDULE.len() - 1],
    ))
}

/// `sqrt((x - center)ᵀ Σ⁻¹ (x - center))`.
pub fn mahalanobis(x: &[f64; 3], center: &[f64; 3], inverse_covariance: &Mat3) -> f64 {
    let d = Vector3::new(x[0] - center[0], x[1] - center[1], x[2] - center[2]);
    let q = d.dot(&(inverse_covariance * d));
    q.max(0.0).sqrt()
}

/// Color bands for distance scatter plots. Right-open: `[2, 3)` is suspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceBand {
    Good,
    Suspect,
    Anomalous,
    Severe,
}

impl DistanceBand {
    pub fn as_str(self) -> &'static str {
        match self {
            DistanceBand::Good => "good",
            DistanceBand::Suspect => "suspect",
            DistanceBand::Anomalous => "anomalous",
            DistanceBand::Severe => "severe",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandEdges {
    pub suspect: f64,
    pub anomalous: f64,
    pub severe: f64,
}

impl Default for BandEdges {
    fn default() -> Self {
        BandEdges {
            suspect: 2.0,
            anomalous: 3.0,
            severe: 4.0,
        }
    }
}

impl BandEdges {
    pub fn band(&self, d: f64) -> DistanceBand {
        if d >= self.severe {
            DistanceBand::Severe
        } else if d >= self.anomalous {
            DistanceBand::Anomalous
        } else if d >= self.suspect {
            DistanceBand::Suspect
        } else {
            DistanceBand::Good
        }
    }
}

/// How "closest center" is decided. The reported distance is always Mahalanobis.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AssignmentMetric {
    #[default]
    Mahalanobis,
    /// Euclidean in standardized units, as K-means itself measures.
    Euclidean,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub outlier_threshold: f64,
    pub bands: BandEdges,
    pub assignment: AssignmentMetric,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            outlier_threshold: 2.5,
            bands: BandEdges::default(),
            assignment: AssignmentMetric::default(),
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<()> {
        let b = &self.bands;
        if !(self.outlier_threshold > 0.0)
            || !(b.suspect > 0.0 && b.suspect < b.anomalous && b.anomalous < b.severe)
        {
            return Err(Error::InvalidConfig(
                "thresholds must be positive and band edges increasing".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    /// Index into the model's speed-ordered centers.
    pub regime_index: usize,
    pub distance: f64,
    pub band: DistanceBand,
    pub is_outlier: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredObservation {
    pub observation: Observation,
    /// `Err` names the missing feature that made the row unscoreable.
    pub score: std::result::Result<Score, &'static str>,
}

impl ScoredObservation {
    pub fn score(&self) -> Option<&Score> {
        self.score.as_ref().ok()
    }
}

/// Scores against one model, tagged with that model's fingerprint.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub model_fingerprint: String,
    pub rows: Vec<ScoredObservation>,
}

impl ScoredSet {
    pub fn scored_count(&self) -> usize {
        self.rows.iter().filter(|r| r.score.is_ok()).count()
    }
}

/// Assigns a complete feature vector to its closest regime and scores it.
pub fn score_vector(x: &FeatureVector, model: &ClusterModel, config: &ScoringConfig) -> Score {
    let inv = model.inverse_covariance();
    let (regime_index, distance) = match config.assignment {
        AssignmentMetric::Mahalanobis => {
            argmin(model.centers.iter().map(|c| mahalanobis(&x.0, c, &inv)))
        }
        AssignmentMetric::Euclidean => {
            let z = model.standardization.apply(&x.0);
            let (idx, _) = argmin(
                model
                    .centers_std
                    .iter()
                    .map(|c| (0..3).map(|j| (z[j] - c[j]).powi(2)).sum::<f64>()),
            );
            (idx, mahalanobis(&x.0, &model.centers[idx], &inv))
        }
    };
    Score {
        regime_index,
        distance,
        band: config.bands.band(distance),
        is_outlier: distance > config.outlier_threshold,
    }
}

/// First index achieving the minimum.
fn argmin(values: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best
}

/// Scores one observation; rows missing a feature come back unscoreable.
pub fn assign_and_score(
    observation: &Observation,
    model: &ClusterModel,
    config: &ScoringConfig,
) -> ScoredObservation {
    ScoredObservation {
        observation: observation.clone(),
        score: observation
            .features()
            .map(|x| score_vector(&x, model, config)),
    }
}

pub fn score_all(
    observations: &[Observation],
    model: &ClusterModel,
    config: &ScoringConfig,
) -> ScoredSet {
    let rows = observations
        .par_iter()
        .map(|o| assign_and_score(o, model, config))
        .collect();
    ScoredSet {
        model_fingerprint: model.fingerprint.clone(),
        rows,
    }
}
