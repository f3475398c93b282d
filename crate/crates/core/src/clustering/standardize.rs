use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Observation, FEATURE_NAMES};

/// Per-feature z-score parameters in raw units (population standard deviation).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: [f64; 3],
    pub sd: [f64; 3],
}

impl Standardization {
    pub fn fit(points: &[[f64; 3]]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPartition);
        }
        let n = points.len() as f64;
        let mut mean = [0.0; 3];
        for p in points {
            for j in 0..3 {
                mean[j] += p[j];
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut sd = [0.0; 3];
        for p in points {
            for j in 0..3 {
                sd[j] += (p[j] - mean[j]).powi(2);
            }
        }
        for j in 0..3 {
            sd[j] = (sd[j] / n).sqrt();
            if !(sd[j] > 0.0) {
                return Err(Error::DegeneratePartition(FEATURE_NAMES[j]));
            }
        }
        Ok(Standardization { mean, sd })
    }

    pub fn apply(&self, x: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|j| (x[j] - self.mean[j]) / self.sd[j])
    }

    pub fn invert(&self, z: &[f64; 3]) -> [f64; 3] {
        std::array::from_fn(|j| z[j] * self.sd[j] + self.mean[j])
    }
}

/// A training partition reduced to complete feature vectors.
#[derive(Debug, Clone)]
pub struct Standardized {
    pub raw: Vec<[f64; 3]>,
    pub points: Vec<[f64; 3]>,
    pub params: Standardization,
    /// Rows left out because a feature was missing.
    pub excluded_missing: usize,
}

/// Z-scores the complete rows of a partition.
pub fn standardize(observations: &[Observation]) -> Result<Standardized> {
    let mut raw = Vec::with_capacity(observations.len());
    let mut excluded_missing = 0;
    for obs in observations {
        match obs.features() {
            Ok(f) => raw.push(f.0),
            Err(_) => excluded_missing += 1,
        }
    }
    standardize_points(raw, excluded_missing)
}

pub fn standardize_points(raw: Vec<[f64; 3]>, excluded_missing: usize) -> Result<Standardized> {
    let params = Standardization::fit(&raw)?;
    let points = raw.iter().map(|x| params.apply(x)).collect();
    Ok(Standardized {
        raw,
        points,
        params,
        excluded_missing,
    })
}
