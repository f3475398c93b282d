//! Loading observation datasets and slicing them into training partitions.

pub(crate) mod csv_io;
pub mod synthetic;

use std::collections::BTreeSet;
use std::path::PathBuf;

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::model::{DetectorId, Observation, SegmentKey, TemporalGroup};

pub use csv_io::{
    read_csv, read_csv_from, write_csv, CsvSchema, IngestOutcome, RejectedRow, RejectionReport,
    OBSERVATION_COLUMNS,
};
pub use synthetic::{
    generate_synthetic, generate_with_truth, AnomalyInjection, AnomalyKind, RegimeSpec,
    ScenarioConfig, SyntheticData, TruthRow, ValuePattern,
};

/// Where a dataset came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    File {
        path: PathBuf,
    },
    Generator {
        config_sha256: String,
    },
    Partition {
        parent: Box<Provenance>,
        segment: String,
        group: TemporalGroup,
    },
    InMemory,
}

/// Observations sorted by `(detector_id, timestamp)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    observations: Vec<Observation>,
    pub provenance: Provenance,
}

impl Dataset {
    /// Builds a dataset, sorting per detector by time. The sort is stable so
    /// duplicate timestamps keep their input order.
    pub fn new(mut observations: Vec<Observation>, provenance: Provenance) -> Self {
        observations.sort_by(|a, b| {
            a.detector_id
                .cmp(&b.detector_id)
                .then(a.timestamp.cmp(&b.timestamp))
        });
        Dataset {
            observations,
            provenance,
        }
    }

    pub fn observations(&self) -> &[Observation] {
        &self.observations
    }

    pub fn into_observations(self) -> Vec<Observation> {
        self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn segments(&self) -> BTreeSet<SegmentKey> {
        self.observations
            .iter()
            .map(|o| o.segment.clone())
            .collect()
    }

    pub fn detectors(&self) -> BTreeSet<DetectorId> {
        self.observations
            .iter()
            .map(|o| o.detector_id.clone())
            .collect()
    }

    /// Contiguous per-detector slices, in detector order.
    pub fn by_detector(&self) -> impl Iterator<Item = (&DetectorId, &[Observation])> {
        self.observations
            .chunk_by(|a, b| a.detector_id == b.detector_id)
            .map(|chunk| (&chunk[0].detector_id, chunk))
    }

    pub fn detector(&self, id: &DetectorId) -> &[Observation] {
        let start = self.observations.partition_point(|o| &o.detector_id < id);
        let end = self.observations.partition_point(|o| &o.detector_id <= id);
        &self.observations[start..end]
    }
}

/// Observations on `segment` whose local calendar day falls in `group`.
pub fn partition(dataset: &Dataset, segment: &SegmentKey, group: TemporalGroup, tz: Tz) -> Dataset {
    let observations = dataset
        .observations
        .iter()
        .filter(|o| &o.segment == segment && group.contains(o.timestamp, tz))
        .cloned()
        .collect();
    Dataset {
        observations,
        provenance: Provenance::Partition {
            parent: Box::new(dataset.provenance.clone()),
            segment: segment.to_string(),
            group,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Direction, DEFAULT_TIMEZONE};
    use chrono::{Duration, TimeZone, Utc};

    fn week() -> Dataset {
        // Fri 2015-05-01 through Thu 2015-05-07, hourly, two detectors, two segments.
        let start = Utc.with_ymd_and_hms(2015, 5, 1, 7, 0, 0).unwrap();
        let mut obs = Vec::new();
        for h in 0..(7 * 24) {
            for (det, seg) in [
                ("a", SegmentKey::new("I-5", Direction::North)),
                ("b", SegmentKey::new("I-5", Direction::South)),
            ] {
                obs.push(Observation {
                    detector_id: det.into(),
                    segment: seg,
                    timestamp: start + Duration::hours(h),
                    speed: Some(60.0),
                    volume: Some(5),
                    occupancy: Some(5.0),
                });
            }
        }
        obs.reverse();
        Dataset::new(obs, Provenance::InMemory)
    }

    #[test]
    fn sorted_per_detector() {
        let ds = week();
        for (_, slice) in ds.by_detector() {
            assert!(slice.windows(2).all(|w| w[0].timestamp <= w[1].timestamp));
        }
        assert_eq!(ds.detector(&"b".into()).len(), 168);
        assert!(ds.detector(&"zz".into()).is_empty());
    }

    #[test]
    fn weekend_partition_has_only_weekend_days() {
        use chrono::{Datelike, Weekday};
        let ds = week();
        let seg = SegmentKey::new("I-5", Direction::North);
        let weekend = partition(&ds, &seg, TemporalGroup::SatSun, DEFAULT_TIMEZONE);
        assert_eq!(weekend.len(), 48);
        assert!(weekend.observations().iter().all(|o| {
            let day = o.timestamp.with_timezone(&DEFAULT_TIMEZONE).weekday();
            day == Weekday::Sat || day == Weekday::Sun
        }));
    }

    #[test]
    fn all_group_is_identity_for_a_single_segment() {
        let ds = week();
        let seg = SegmentKey::new("I-5", Direction::North);
        let all = partition(&ds, &seg, TemporalGroup::All, DEFAULT_TIMEZONE);
        let expected: Vec<_> = ds
            .observations()
            .iter()
            .filter(|o| o.segment == seg)
            .cloned()
            .collect();
        assert_eq!(all.observations(), expected.as_slice());
    }

    #[test]
    fn day_groups_union_to_all() {
        let ds = week();
        let seg = SegmentKey::new("I-5", Direction::South);
        let all = partition(&ds, &seg, TemporalGroup::All, DEFAULT_TIMEZONE);
        let mut union: Vec<Observation> = TemporalGroup::DAY_GROUPS
            .iter()
            .flat_map(|g| partition(&ds, &seg, *g, DEFAULT_TIMEZONE).into_observations())
            .collect();
        union.sort_by_key(|o| o.timestamp);
        assert_eq!(union.as_slice(), all.observations());
    }
}
