//! Domain types shared by every stage of the pipeline.
//!
//! An [`Observation`] is one 20-second loop-detector report. Sensor values are
//! optional: a missing reading is kept as `None` and is never conflated with a
//! reading of zero, since "speed 0" and "no speed" mean different things to the
//! rule-based cleaner.

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal reporting interval of a loop detector, in seconds.
pub const CADENCE_SECS: i64 = 20;

/// Feature order used everywhere a feature vector is stored or persisted.
pub const FEATURE_NAMES: [&str; 3] = ["speed", "volume", "occupancy"];

/// Zone used for day-of-week grouping unless configured otherwise.
pub const DEFAULT_TIMEZONE: Tz = chrono_tz::America::Los_Angeles;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorId(pub String);

impl DetectorId {
    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for DetectorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for DetectorId {
    fn from(s: &str) -> Self {
        DetectorId(s.to_owned())
    }
}

impl From<String> for DetectorId {
    fn from(s: String) -> Self {
        DetectorId(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "NB")]
    North,
    #[serde(rename = "SB")]
    South,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::North => "NB",
            Direction::South => "SB",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "NB" => Ok(Direction::North),
            "SB" => Ok(Direction::South),
            other => Err(Error::InvalidConfig(format!(
                "direction must be NB or SB, got '{other}'"
            ))),
        }
    }
}

/// A directional freeway segment, e.g. `I-405 NB`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SegmentKey {
    pub highway: String,
    pub direction: Direction,
}

impl SegmentKey {
    pub fn new(highway: impl Into<String>, direction: Direction) -> Self {
        SegmentKey {
            highway: highway.into(),
            direction,
        }
    }
}

impl fmt::Display for SegmentKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.highway, self.direction)
    }
}

/// Groups of days with similar traffic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemporalGroup {
    All,
    MonFri,
    TueWedThu,
    SatSun,
}

impl TemporalGroup {
    pub const DAY_GROUPS: [TemporalGroup; 3] = [
        TemporalGroup::MonFri,
        TemporalGroup::TueWedThu,
        TemporalGroup::SatSun,
    ];

    pub fn of_weekday(day: Weekday) -> TemporalGroup {
        match day {
            Weekday::Mon | Weekday::Fri => TemporalGroup::MonFri,
            Weekday::Tue | Weekday::Wed | Weekday::Thu => TemporalGroup::TueWedThu,
            Weekday::Sat | Weekday::Sun => TemporalGroup::SatSun,
        }
    }

    /// Local weekdays belonging to the group.
    pub fn weekdays(self) -> &'static [Weekday] {
        use Weekday::*;
        match self {
            TemporalGroup::All => &[Mon, Tue, Wed, Thu, Fri, Sat, Sun],
            TemporalGroup::MonFri => &[Mon, Fri],
            TemporalGroup::TueWedThu => &[Tue, Wed, Thu],
            TemporalGroup::SatSun => &[Sat, Sun],
        }
    }

    /// Whether an instant falls in this group, judged by its local calendar day.
    pub fn contains(self, timestamp: DateTime<Utc>, tz: Tz) -> bool {
        self == TemporalGroup::All || temporal_group_of(timestamp, tz) == self
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TemporalGroup::All => "all",
            TemporalGroup::MonFri => "mon-fri",
            TemporalGroup::TueWedThu => "tue-wed-thu",
            TemporalGroup::SatSun => "sat-sun",
        }
    }
}

impl fmt::Display for TemporalGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemporalGroup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .to_ascii_lowercase()
            .chars()
            .filter(|c| c.is_ascii_alphabetic())
            .collect();
        match norm.as_str() {
            "all" => Ok(TemporalGroup::All),
            "monfri" | "mf" => Ok(TemporalGroup::MonFri),
            "tuewedthu" | "twt" => Ok(TemporalGroup::TueWedThu),
            "satsun" | "ss" => Ok(TemporalGroup::SatSun),
            _ => Err(Error::InvalidConfig(format!("unknown day group '{s}'"))),
        }
    }
}

/// Day-of-week group of the local calendar day containing `timestamp`.
///
/// Never returns [`TemporalGroup::All`]; every instant is implicitly in `All`.
pub fn temporal_group_of(timestamp: DateTime<Utc>, tz: Tz) -> TemporalGroup {
    TemporalGroup::of_weekday(timestamp.with_timezone(&tz).weekday())
}

pub fn parse_timezone(name: &str) -> Result<Tz> {
    name.parse::<Tz>()
        .map_err(|_| Error::UnknownTimezone(name.to_owned()))
}

/// `(speed, volume, occupancy)` in raw units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(pub [f64; 3]);

impl FeatureVector {
    pub fn new(speed: f64, volume: f64, occupancy: f64) -> Self {
        FeatureVector([speed, volume, occupancy])
    }

    pub fn speed(&self) -> f64 {
        self.0[0]
    }

    pub fn volume(&self) -> f64 {
        self.0[1]
    }

    pub fn occupancy(&self) -> f64 {
        self.0[2]
    }
}

/// One detector report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub detector_id: DetectorId,
    pub segment: SegmentKey,
    pub timestamp: DateTime<Utc>,
    /// Miles per hour.
    pub speed: Option<f64>,
    /// Vehicles per 20-second interval.
    pub volume: Option<u32>,
    /// Percent, 0 to 100.
    pub occupancy: Option<f64>,
}

impl Observation {
    /// The full feature vector, or the name of the first missing feature.
    pub fn features(&self) -> std::result::Result<FeatureVector, &'static str> {
        let speed = self.speed.ok_or(FEATURE_NAMES[0])?;
        let volume = self.volume.ok_or(FEATURE_NAMES[1])?;
        let occupancy = self.occupancy.ok_or(FEATURE_NAMES[2])?;
        Ok(FeatureVector::new(speed, f64::from(volume), occupancy))
    }

    pub fn is_complete(&self) -> bool {
        self.speed.is_some() && self.volume.is_some() && self.occupancy.is_some()
    }
}

/// An unvalidated input row, one string per column. Empty cells are missing values.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub detector_id: String,
    pub highway: String,
    pub direction: String,
    pub timestamp: String,
    pub speed: String,
    pub volume: String,
    pub occupancy: String,
}

/// Why a raw record could not become an [`Observation`].
#[derive(Debug, Clone, PartialEq)]
pub enum Rejection {
    EmptyDetectorId,
    EmptyHighway,
    BadDirection(String),
    UnparseableTimestamp(String),
    UnparseableNumber { field: &'static str, value: String },
    NegativeSpeed(f64),
    NegativeVolume(f64),
    NonIntegerVolume(f64),
    OccupancyOutOfRange(f64),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::EmptyDetectorId => write!(f, "empty detector_id"),
            Rejection::EmptyHighway => write!(f, "empty highway"),
            Rejection::BadDirection(d) => write!(f, "direction '{d}' is not NB or SB"),
            Rejection::UnparseableTimestamp(t) => write!(f, "unparseable timestamp '{t}'"),
            Rejection::UnparseableNumber { field, value } => {
                write!(f, "unparseable {field} '{value}'")
            }
            Rejection::NegativeSpeed(v) => write!(f, "negative speed {v}"),
            Rejection::NegativeVolume(v) => write!(f, "negative volume {v}"),
            Rejection::NonIntegerVolume(v) => write!(f, "non-integer volume {v}"),
            Rejection::OccupancyOutOfRange(v) => write!(f, "occupancy out of [0,100]: {v}"),
        }
    }
}

impl From<Rejection> for Error {
    fn from(r: Rejection) -> Self {
        Error::MalformedRecord(r.to_string())
    }
}

fn parse_optional(field: &'static str, cell: &str) -> std::result::Result<Option<f64>, Rejection> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Ok(None);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(Rejection::UnparseableNumber {
            field,
            value: cell.to_owned(),
        }),
    }
}

/// Turn a raw row into an [`Observation`] or say why it cannot be one.
pub fn validate_observation(raw: &RawRecord) -> std::result::Result<Observation, Rejection> {
    let detector_id = raw.detector_id.trim();
    if detector_id.is_empty() {
        return Err(Rejection::EmptyDetectorId);
    }
    let highway = raw.highway.trim();
    if highway.is_empty() {
        return Err(Rejection::EmptyHighway);
    }
    let direction: Direction = raw
        .direction
        .parse()
        .map_err(|_| Rejection::BadDirection(raw.direction.clone()))?;
    let timestamp = DateTime::parse_from_rfc3339(raw.timestamp.trim())
        .map_err(|_| Rejection::UnparseableTimestamp(raw.timestamp.clone()))?
        .with_timezone(&Utc);

    let speed = parse_optional("speed", &raw.speed)?;
    if let Some(s) = speed {
        if s < 0.0 {
            return Err(Rejection::NegativeSpeed(s));
        }
    }
    let volume = match parse_optional("volume", &raw.volume)? {
        None => None,
        Some(v) if v < 0.0 => return Err(Rejection::NegativeVolume(v)),
        Some(v) if v.fract() != 0.0 || v > f64::from(u32::MAX) => {
            return Err(Rejection::NonIntegerVolume(v))
        }
        Some(v) => Some(v as u32),
    };
    let occupancy = parse_optional("occupancy", &raw.occupancy)?;
    if let Some(o) = occupancy {
        if !(0.0..=100.0).contains(&o) {
            return Err(Rejection::OccupancyOutOfRange(o));
        }
    }

    Ok(Observation {
        detector_id: DetectorId::from(detector_id),
        segment: SegmentKey::new(highway, direction),
        timestamp,
        speed,
        volume,
        occupancy,
    })
}

impl From<&Observation> for RawRecord {
    fn from(obs: &Observation) -> Self {
        fn cell<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        RawRecord {
            detector_id: obs.detector_id.0.clone(),
            highway: obs.segment.highway.clone(),
            direction: obs.segment.direction.to_string(),
            timestamp: format_timestamp(obs.timestamp),
            speed: cell(obs.speed),
            volume: cell(obs.volume),
            occupancy: cell(obs.occupancy),
        }
    }
}

/// ISO-8601 with a `Z` suffix and no fractional seconds unless present.
pub fn format_timestamp(ts: DateTime<Utc>) -> String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}
