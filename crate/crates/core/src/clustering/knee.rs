use serde::{Deserialize, Serialize};

use super::kmeans::{distinct_count, kmeans_fit, KMeansConfig, Point};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElbowPoint {
    pub k: usize,
    pub avg_sq_error: f64,
}

/// Average squared error for a run of consecutive k values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElbowCurve {
    pub points: Vec<ElbowPoint>,
}

impl ElbowCurve {
    pub fn from_errors(k_min: usize, errors: &[f64]) -> Self {
        ElbowCurve {
            points: errors
                .iter()
                .enumerate()
                .map(|(i, e)| ElbowPoint {
                    k: k_min + i,
                    avg_sq_error: *e,
                })
                .collect(),
        }
    }

    pub fn errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.avg_sq_error).collect()
    }
}

/// Fits every k in `k_min..=k_max` with the same seed and restarts.
pub fn elbow_sweep(
    points: &[Point],
    k_min: usize,
    k_max: usize,
    seed: u64,
    restarts: usize,
) -> Result<ElbowCurve> {
    if k_min == 0 || k_min > k_max {
        return Err(Error::InvalidK);
    }
    let distinct = distinct_count(points);
    if distinct < k_max {
        return Err(Error::TooFewDistinctPoints { k: k_max, distinct });
    }
    let points = (k_min..=k_max)
        .map(|k| {
            let cfg = KMeansConfig::new(k, seed).with_restarts(restarts);
            kmeans_fit(points, &cfg).map(|fit| ElbowPoint {
                k,
                avg_sq_error: fit.avg_sq_error,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ElbowCurve { points })
}

/// Perpendicular distance from each curve point to the chord through the
/// first and last points.
pub fn chord_distances(curve: &ElbowCurve) -> Vec<f64> {
    let pts = &curve.points;
    let (first, last) = (pts[0], pts[pts.len() - 1]);
    let (x0, y0) = (first.k as f64, first.avg_sq_error);
    let (x1, y1) = (last.k as f64, last.avg_sq_error);
    let (dx, dy) = (x1 - x0, y1 - y0);
    let norm = dx.hypot(dy);
    pts.iter()
        .map(|p| {
            let (x, y) = (p.k as f64, p.avg_sq_error);
            if norm == 0.0 {
                0.0
            } else {
                (dy * (x - x0) - dx * (y - y0)).abs() / norm
            }
        })
        .collect()
}

/// Knee of the curve: the k farthest from the end-to-end chord, ties to the
/// smaller k. An explicit `override_k` always wins.
pub fn select_k_knee(curve: &ElbowCurve, override_k: Option<usize>) -> Result<usize> {
    if let Some(k) = override_k {
        return Ok(k);
    }
    if curve.points.len() < 3 {
        return Err(Error::CurveTooShort(curve.points.len()));
    }
    let dists = chord_distances(curve);
    // Distances within rounding noise of each other count as ties.
    let (lo, hi) = curve
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.avg_sq_error), hi.max(p.avg_sq_error))
        });
    let span = (hi - lo) + curve.points.len() as f64;
    let eps = 1e-9 * span;
    let mut best = 0;
    for (i, d) in dists.iter().enumerate() {
        if *d > dists[best] + eps {
            best = i;
        }
    }
    Ok(curve.points[best].k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn knee_of_reference_curve_is_three() {
        let curve =
            ElbowCurve::from_errors(1, &[100.0, 40.0, 15.0, 12.0, 10.0, 9.0, 8.5, 8.0, 7.8, 7.6]);
        // Distances computed independently, point by point, from the chord
        // (1, 100) -> (10, 7.6).
        let expected = [
            0.0,
            4.821339169826331,
            6.2496447415845315,
            5.545186337414197,
            4.743784116156202,
            3.8454380778105435,
            2.898620130921057,
            1.9518021840315702,
            0.9759010920157847,
            0.0,
        ];
        for (d, e) in chord_distances(&curve).iter().zip(expected) {
            assert!((d - e).abs() < 1e-12, "{d} vs {e}");
        }
        assert_eq!(select_k_knee(&curve, None).unwrap(), 3);
    }

    #[test]
    fn override_wins() {
        let curve = ElbowCurve::from_errors(1, &[100.0, 40.0, 15.0, 12.0]);
        assert_eq!(select_k_knee(&curve, Some(4)).unwrap(), 4);
    }

    #[test]
    fn linear_curve_ties_to_smallest_k() {
        let curve =
            ElbowCurve::from_errors(1, &[10.0, 9.0, 8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0]);
        assert_eq!(select_k_knee(&curve, None).unwrap(), 1);
        let curve = ElbowCurve::from_errors(1, &[0.3, 0.2, 0.1]);
        assert_eq!(select_k_knee(&curve, None).unwrap(), 1);
    }

    #[test]
    fn short_curve() {
        let curve = ElbowCurve::from_errors(1, &[3.0, 1.0]);
        assert!(matches!(
            select_k_knee(&curve, None),
            Err(Error::CurveTooShort(2))
        ));
    }

    #[test]
    fn sweep_rejects_k_beyond_distinct_points() {
        let pts = vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]];
        assert!(matches!(
            elbow_sweep(&pts, 1, 10, 0, 2),
            Err(Error::TooFewDistinctPoints { k: 10, distinct: 3 })
        ));
    }
}
