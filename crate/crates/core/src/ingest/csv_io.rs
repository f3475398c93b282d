use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::io::{csv_reader, csv_writer};
use crate::model::{validate_observation, Observation, RawRecord};

/// Column names expected in an observation CSV.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub detector_id: String,
    pub highway: String,
    pub direction: String,
    pub timestamp: String,
    pub speed: String,
    pub volume: String,
    pub occupancy: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            detector_id: "detector_id".into(),
            highway: "highway".into(),
            direction: "direction".into(),
            timestamp: "timestamp".into(),
            speed: "speed".into(),
            volume: "volume".into(),
            occupancy: "occupancy".into(),
        }
    }
}

impl CsvSchema {
    fn columns(&self) -> [&str; 7] {
        [
            &self.detector_id,
            &self.highway,
            &self.direction,
            &self.timestamp,
            &self.speed,
            &self.volume,
            &self.occupancy,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectedRow {
    /// 1-based line in the source file.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RejectionReport {
    pub rows: Vec<RejectedRow>,
}

impl RejectionReport {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Counts keyed by the reason text with any trailing value stripped.
    pub fn counts_by_reason(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for row in &self.rows {
            let key = row
                .reason
                .split(':')
                .next()
                .unwrap_or(&row.reason)
                .split(" '")
                .next()
                .unwrap_or(&row.reason)
                .to_owned();
            *counts.entry(key).or_insert(0) += 1;
        }
        counts
    }
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    pub rejections: RejectionReport,
}

pub fn read_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<IngestOutcome> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::FileUnreadable {
        path: path.to_owned(),
        source,
    })?;
    let mut outcome = read_csv_from(file, schema)?;
    outcome.dataset.provenance = Provenance::File {
        path: path.to_owned(),
    };
    Ok(outcome)
}

pub fn read_csv_from<R: Read>(input: R, schema: &CsvSchema) -> Result<IngestOutcome> {
    let mut reader = csv_reader(input);
    let headers = match reader.headers() {
        Ok(h) => h.clone(),
        Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(e.into()),
        Err(_) => csv::StringRecord::new(),
    };
    let found: Vec<String> = headers.iter().map(str::to_owned).collect();
    let expected = schema.columns();
    // Reading an empty file yields no header at all; treat it as an empty dataset.
    if found.is_empty() {
        return Ok(IngestOutcome {
            dataset: Dataset::new(Vec::new(), Provenance::InMemory),
            rejections: RejectionReport::default(),
        });
    }
    let mut index = [0usize; 7];
    for (slot, name) in index.iter_mut().zip(expected) {
        *slot = found
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::HeaderMismatch {
                expected: expected.iter().map(|s| s.to_string()).collect(),
                found: found.clone(),
            })?;
    }

    let mut observations = Vec::new();
    let mut rejections = RejectionReport::default();
    for result in reader.records() {
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                if let csv::ErrorKind::Io(_) = e.kind() {
                    return Err(e.into());
                }
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                rejections.rows.push(RejectedRow {
                    line,
                    reason: format!("unreadable row: {e}"),
                });
                continue;
            }
        };
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let cell = |i: usize| record.get(index[i]).unwrap_or("").to_owned();
        let raw = RawRecord {
            detector_id: cell(0),
            highway: cell(1),
            direction: cell(2),
            timestamp: cell(3),
            speed: cell(4),
            volume: cell(5),
            occupancy: cell(6),
        };
        match validate_observation(&raw) {
            Ok(obs) => observations.push(obs),
            Err(reason) => rejections.rows.push(RejectedRow {
                line,
                reason: reason.to_string(),
            }),
        }
    }

    Ok(IngestOutcome {
        dataset: Dataset::new(observations, Provenance::InMemory),
        rejections,
    })
}

pub const OBSERVATION_COLUMNS: [&str; 7] = [
    "detector_id",
    "highway",
    "direction",
    "timestamp",
    "speed",
    "volume",
    "occupancy",
];

pub(crate) fn observation_cells(obs: &Observation) -> [String; 7] {
    let raw = RawRecord::from(obs);
    [
        raw.detector_id,
        raw.highway,
        raw.direction,
        raw.timestamp,
        raw.speed,
        raw.volume,
        raw.occupancy,
    ]
}

/// Writes observations in the default schema.
pub fn write_csv<W: Write>(out: W, observations: &[Observation]) -> Result<()> {
    let mut w = csv_writer(out, "observations")?;
    w.write_record(OBSERVATION_COLUMNS)?;
    for obs in observations {
        w.write_record(observation_cells(obs))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "detector_id,highway,direction,timestamp,speed,volume,occupancy\n";

    fn read(body: &str) -> IngestOutcome {
        read_csv_from(format!("{HEADER}{body}").as_bytes(), &CsvSchema::default()).unwrap()
    }

    #[test]
    fn three_good_rows() {
        let out = read(
            "d1,I-5,NB,2015-05-06T15:00:00Z,55,10,8\n\
             d1,I-5,NB,2015-05-06T15:00:20Z,54,9,8.5\n\
             d2,I-5,NB,2015-05-06T15:00:00Z,60,7,6\n",
        );
        assert_eq!(out.dataset.len(), 3);
        assert!(out.rejections.is_empty());
    }

    #[test]
    fn out_of_range_row_is_reported() {
        let out = read(
            "d1,I-5,NB,2015-05-06T15:00:00Z,55,10,8\n\
             d1,I-5,NB,2015-05-06T15:00:20Z,54,9,150\n\
             d1,I-5,NB,2015-05-06T15:00:40Z,53,9,9\n",
        );
        assert_eq!(out.dataset.len(), 2);
        assert_eq!(out.rejections.len(), 1);
        assert_eq!(out.rejections.rows[0].line, 3);
        let counts = out.rejections.counts_by_reason();
        assert_eq!(counts.get("occupancy out of [0,100]"), Some(&1));
    }

    #[test]
    fn header_only_is_empty_dataset() {
        let out = read("");
        assert!(out.dataset.is_empty());
        assert!(out.rejections.is_empty());
    }

    #[test]
    fn completely_empty_input_is_empty_dataset() {
        let out = read_csv_from("".as_bytes(), &CsvSchema::default()).unwrap();
        assert!(out.dataset.is_empty());
    }

    #[test]
    fn missing_column_is_header_mismatch() {
        let err = read_csv_from(
            "detector_id,highway,direction,timestamp,speed,volume\n".as_bytes(),
            &CsvSchema::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::HeaderMismatch { .. }));
    }

    #[test]
    fn short_row_is_rejected_not_fatal() {
        let out =
            read("d1,I-5,NB,2015-05-06T15:00:00Z,55\nd1,I-5,NB,2015-05-06T15:00:20Z,54,9,8\n");
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.rejections.len(), 1);
    }

    #[test]
    fn columns_may_be_reordered_and_renamed() {
        let schema = CsvSchema {
            occupancy: "occ".into(),
            ..CsvSchema::default()
        };
        let text = "occ,speed,volume,timestamp,direction,highway,detector_id,extra\n\
                    8,55,10,2015-05-06T15:00:00Z,SB,I-205,x,ignored\n";
        let out = read_csv_from(text.as_bytes(), &schema).unwrap();
        assert_eq!(out.dataset.len(), 1);
        assert_eq!(out.dataset.observations()[0].occupancy, Some(8.0));
    }

    #[test]
    fn missing_file_is_unreadable() {
        let err = read_csv("/nonexistent/obs.csv", &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::FileUnreadable { .. }));
    }

    #[test]
    fn written_csv_reads_back() {
        let out = read(
            "d1,I-5,NB,2015-05-06T15:00:00Z,55.25,10,8\n\
             d1,I-5,NB,2015-05-06T15:00:20Z,,9,\n",
        );
        let mut buf = Vec::new();
        write_csv(&mut buf, out.dataset.observations()).unwrap();
        assert!(buf.starts_with(b"# regimeclean-format: 1"));
        let again = read_csv_from(buf.as_slice(), &CsvSchema::default()).unwrap();
        assert_eq!(again.dataset.observations(), out.dataset.observations());
    }
}
