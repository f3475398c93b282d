//! Machine-learning cleaning of freeway loop-detector data.
//!
//! The pipeline clusters 20-second `(speed, volume, occupancy)` readings into
//! traffic regimes, scores every reading by its Mahalanobis distance to the
//! closest regime, flags clusters and readings that look like bad data, and
//! measures what that cleaning does to per-minute travel-time estimates.
//!
//! ```text
//! ingest -> clustering -> scoring -> anomaly / regimes -> traveltime
//! ```

pub mod anomaly;
pub mod clustering;
pub mod error;
pub mod ingest;
pub mod io;
pub mod model;
pub mod regimes;
pub mod report;
pub mod scoring;
pub mod traveltime;

pub use nalgebra;

pub use clustering::{ClusterModel, ElbowCurve, FitConfig};
pub use error::{Error, Result};
pub use ingest::{Dataset, ScenarioConfig};
pub use model::{
    DetectorId, Direction, FeatureVector, Observation, SegmentKey, TemporalGroup, DEFAULT_TIMEZONE,
};
pub use scoring::{DistanceBand, ScoredObservation, ScoringConfig};
