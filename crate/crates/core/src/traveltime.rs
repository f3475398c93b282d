//! Two ways of cleaning detector data, per-minute travel times over a
//! detector layout, and the comparison of both against ground truth.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, Duration, DurationRound, NaiveTime, Timelike, Utc, Weekday};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::synthetic::TruthRow;
use crate::io::{csv_reader, csv_writer};
use crate::model::{format_timestamp, DetectorId, Observation, DEFAULT_TIMEZONE};
use crate::scoring::ScoredObservation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub detector_id: DetectorId,
    pub influence_length_miles: f64,
}

/// Detectors in road order, each standing for a stretch of the segment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorLayout {
    entries: Vec<LayoutEntry>,
}

impl DetectorLayout {
    pub fn new(entries: Vec<LayoutEntry>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidLayout("layout has no detectors".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !(e.influence_length_miles > 0.0 && e.influence_length_miles.is_finite()) {
                return Err(Error::InvalidLayout(format!(
                    "influence length of {} must be positive",
                    e.detector_id
                )));
            }
            if !seen.insert(&e.detector_id) {
                return Err(Error::InvalidLayout(format!(
                    "{} listed twice",
                    e.detector_id
                )));
            }
        }
        Ok(DetectorLayout { entries })
    }

    /// Every detector given the same influence length.
    pub fn uniform(detectors: impl IntoIterator<Item = DetectorId>, miles: f64) -> Result<Self> {
        Self::new(
            detectors
                .into_iter()
                .map(|detector_id| LayoutEntry {
                    detector_id,
                    influence_length_miles: miles,
                })
                .collect(),
        )
    }

    pub fn entries(&self) -> &[LayoutEntry] {
        &self.entries
    }

    pub fn segment_length(&self) -> f64 {
        self.entries.iter().map(|e| e.influence_length_miles).sum()
    }

    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv_reader(input);
        let entries = rdr
            .deserialize()
            .collect::<std::result::Result<Vec<LayoutEntry>, _>>()?;
        Self::new(entries)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::FileUnreadable {
            path: path.to_owned(),
            source,
        })?;
        Self::read_from(file)
    }

    pub fn write_to<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out, "layout")?;
        for e in &self.entries {
            w.serialize(e)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Threshold rules of the baseline cleaner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Rule {
    /// Speed above 100 mph.
    R1,
    /// More than 17 vehicles in 20 seconds.
    R2,
    /// Occupancy outside `[0, 100]`.
    R3,
    /// Zero speed while vehicles are counted.
    R4,
    /// A feature is missing.
    R5,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DropReason {
    Rule(Rule),
    MahalanobisOutlier,
    Unscoreable,
}

impl DropReason {
    pub fn token(self) -> &'static str {
        match self {
            DropReason::Rule(Rule::R1) => "R1",
            DropReason::Rule(Rule::R2) => "R2",
            DropReason::Rule(Rule::R3) => "R3",
            DropReason::Rule(Rule::R4) => "R4",
            DropReason::Rule(Rule::R5) => "R5",
            DropReason::MahalanobisOutlier => "mahalanobis_outlier",
            DropReason::Unscoreable => "unscoreable",
        }
    }
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CleanedRow {
    pub observation: Observation,
    /// `None` when kept.
    pub dropped: Option<DropReason>,
}

/// One decision per input observation, in input order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CleaningOutcome {
    pub rows: Vec<CleanedRow>,
}

impl CleaningOutcome {
    pub fn kept(&self) -> impl Iterator<Item = &Observation> {
        self.rows
            .iter()
            .filter(|r| r.dropped.is_none())
            .map(|r| &r.observation)
    }

    pub fn kept_count(&self) -> usize {
        self.rows.iter().filter(|r| r.dropped.is_none()).count()
    }

    pub fn dropped_count(&self) -> usize {
        self.rows.len() - self.kept_count()
    }

    pub fn counts_by_reason(&self) -> BTreeMap<DropReason, usize> {
        let mut out = BTreeMap::new();
        for r in self.rows.iter().filter_map(|r| r.dropped) {
            *out.entry(r).or_default() += 1;
        }
        out
    }
}

/// The first rule, in R1..R5 order, that an observation breaks.
pub fn first_rule_violation(o: &Observation) -> Option<Rule> {
    if o.speed.is_some_and(|s| s > 100.0) {
        Some(Rule::R1)
    } else if o.volume.is_some_and(|v| v > 17) {
        Some(Rule::R2)
    } else if o.occupancy.is_some_and(|p| !(0.0..=100.0).contains(&p)) {
        Some(Rule::R3)
    } else if o.speed == Some(0.0) && o.volume.is_some_and(|v| v > 0) {
        Some(Rule::R4)
    } else if !o.is_complete() {
        Some(Rule::R5)
    } else {
        None
    }
}

/// Baseline cleaner: drop a row when any threshold rule fires.
pub fn rule_clean(observations: &[Observation]) -> CleaningOutcome {
    CleaningOutcome {
        rows: observations
            .iter()
            .map(|o| CleanedRow {
                observation: o.clone(),
                dropped: first_rule_violation(o).map(DropReason::Rule),
            })
            .collect(),
    }
}

/// Distance-based cleaner: drop a row whose distance exceeds `threshold`.
pub fn ml_clean(scored: &[ScoredObservation], threshold: f64) -> CleaningOutcome {
    CleaningOutcome {
        rows: scored
            .iter()
            .map(|s| CleanedRow {
                observation: s.observation.clone(),
                dropped: match &s.score {
                    Err(_) => Some(DropReason::Unscoreable),
                    Ok(x) if x.distance > threshold => Some(DropReason::MahalanobisOutlier),
                    Ok(_) => None,
                },
            })
            .collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinuteSpeed {
    pub speed: Option<f64>,
    /// The value was carried over from an earlier minute.
    pub carried: bool,
}

/// One detector's speed per UTC minute, over every minute from its first to
/// its last observation.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MinuteSpeeds {
    pub minutes: BTreeMap<DateTime<Utc>, MinuteSpeed>,
}

impl MinuteSpeeds {
    pub fn speed_at(&self, minute: DateTime<Utc>) -> Option<f64> {
        self.minutes.get(&minute).and_then(|m| m.speed)
    }
}

pub const DEFAULT_LOOKBACK_MINUTES: i64 = 5;

pub fn minute_of(ts: DateTime<Utc>) -> DateTime<Utc> {
    ts.duration_trunc(Duration::minutes(1))
        .expect("minute truncation")
}

/// Mean kept speed per minute for one detector. A minute with no kept speed
/// reuses the last minute that had one, if it is at most `lookback_minutes`
/// earlier.
pub fn per_minute_speeds(
    outcome: &CleaningOutcome,
    detector: &DetectorId,
    lookback_minutes: i64,
) -> MinuteSpeeds {
    let mut sums: BTreeMap<DateTime<Utc>, (f64, usize)> = BTreeMap::new();
    for row in outcome
        .rows
        .iter()
        .filter(|r| &r.observation.detector_id == detector)
    {
        let acc = sums
            .entry(minute_of(row.observation.timestamp))
            .or_insert((0.0, 0));
        if let (None, Some(s)) = (row.dropped, row.observation.speed) {
            acc.0 += s;
            acc.1 += 1;
        }
    }
    let (Some(first), Some(last)) = (
        sums.keys().next().copied(),
        sums.keys().next_back().copied(),
    ) else {
        return MinuteSpeeds::default();
    };
    let mut minutes = BTreeMap::new();
    let mut last_valid: Option<(DateTime<Utc>, f64)> = None;
    let mut t = first;
    while t <= last {
        let entry = match sums.get(&t) {
            Some(&(sum, n)) if n > 0 => {
                let v = sum / n as f64;
                last_valid = Some((t, v));
                MinuteSpeed {
                    speed: Some(v),
                    carried: false,
                }
            }
            _ => match last_valid {
                Some((at, v)) if t - at <= Duration::minutes(lookback_minutes) => MinuteSpeed {
                    speed: Some(v),
                    carried: true,
                },
                _ => MinuteSpeed {
                    speed: None,
                    carried: false,
                },
            },
        };
        minutes.insert(t, entry);
        t += Duration::minutes(1);
    }
    MinuteSpeeds { minutes }
}

/// Per-detector minute speeds for every detector in the layout.
pub fn layout_minute_speeds(
    layout: &DetectorLayout,
    outcome: &CleaningOutcome,
    lookback_minutes: i64,
) -> BTreeMap<DetectorId, MinuteSpeeds> {
    layout
        .entries()
        .iter()
        .map(|e| {
            let s = per_minute_speeds(outcome, &e.detector_id, lookback_minutes);
            (e.detector_id.clone(), s)
        })
        .collect()
}

/// Σ length × 60 / speed over the layout, in minutes. Missing when any detector
/// has no positive speed for the minute.
pub fn estimate_travel_time(
    layout: &DetectorLayout,
    speeds: &BTreeMap<DetectorId, MinuteSpeeds>,
    minute: DateTime<Utc>,
) -> Option<f64> {
    let mut minutes = 0.0;
    for e in layout.entries() {
        let v = speeds.get(&e.detector_id)?.speed_at(minute)?;
        if !(v > 0.0) {
            return None;
        }
        minutes += e.influence_length_miles * 60.0 / v;
    }
    Some(minutes)
}

/// Travel time in minutes per UTC minute.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TravelTimeSeries {
    pub minutes: BTreeMap<DateTime<Utc>, Option<f64>>,
}

impl TravelTimeSeries {
    pub fn get(&self, minute: DateTime<Utc>) -> Option<f64> {
        self.minutes.get(&minute).copied().flatten()
    }

    pub fn present_count(&self) -> usize {
        self.minutes.values().filter(|v| v.is_some()).count()
    }

    pub fn write_to<W: Write>(&self, out: W, kind: &str) -> Result<()> {
        let mut w = csv_writer(out, kind)?;
        w.write_record(["minute", "travel_time_minutes"])?;
        for (m, v) in &self.minutes {
            w.write_record([
                format_timestamp(*m),
                v.map(|v| v.to_string()).unwrap_or_default(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads `minute, travel_time_minutes`; an empty cell is a missing minute.
    pub fn read_from<R: Read>(input: R) -> Result<Self> {
        let mut rdr = csv_reader(input);
        let mut minutes = BTreeMap::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |what: &str| Error::MalformedRecord(format!("row {}: {what}", i + 1));
            let minute = rec
                .get(0)
                .and_then(|s| DateTime::parse_from_rfc3339(s).ok())
                .ok_or_else(|| bad("unparseable minute"))?
                .with_timezone(&Utc);
            let tt = match rec.get(1).unwrap_or("") {
                "" => None,
                s => Some(
                    s.parse::<f64>()
                        .ok()
                        .filter(|v| *v > 0.0 && v.is_finite())
                        .ok_or_else(|| bad("travel time must be a positive number"))?,
                ),
            };
            minutes.insert(minute_of(minute), tt);
        }
        Ok(TravelTimeSeries { minutes })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|source| Error::FileUnreadable {
            path: path.to_owned(),
            source,
        })?;
        Self::read_from(file)
    }
}

/// Travel times over the union of the detectors' minute grids.
pub fn travel_time_series(
    layout: &DetectorLayout,
    speeds: &BTreeMap<DetectorId, MinuteSpeeds>,
) -> TravelTimeSeries {
    let grid: BTreeSet<DateTime<Utc>> = speeds
        .values()
        .flat_map(|s| s.minutes.keys().copied())
        .collect();
    TravelTimeSeries {
        minutes: grid
            .into_iter()
            .map(|m| (m, estimate_travel_time(layout, speeds, m)))
            .collect(),
    }
}

/// Cleaning, per-minute aggregation and travel time in one step.
pub fn travel_times(
    layout: &DetectorLayout,
    outcome: &CleaningOutcome,
    lookback_minutes: i64,
) -> TravelTimeSeries {
    travel_time_series(
        layout,
        &layout_minute_speeds(layout, outcome, lookback_minutes),
    )
}

/// Ground truth from a generator's clean readings: the mean true speed per
/// detector and minute, integrated over the layout.
pub fn ground_truth_from_truth(
    layout: &DetectorLayout,
    observations: &[Observation],
    truth: &[TruthRow],
) -> TravelTimeSeries {
    let rows = observations
        .iter()
        .zip(truth)
        .map(|(o, t)| {
            let mut clean = o.clone();
            clean.speed = Some(t.clean.speed());
            CleanedRow {
                observation: clean,
                dropped: None,
            }
        })
        .collect();
    travel_times(layout, &CleaningOutcome { rows }, 0)
}

/// `[start, end)` in local wall-clock time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PeakWindow {
    pub start: NaiveTime,
    pub end: NaiveTime,
}

impl Default for PeakWindow {
    fn default() -> Self {
        PeakWindow {
            start: NaiveTime::from_hms_opt(16, 0, 0).expect("valid"),
            end: NaiveTime::from_hms_opt(18, 0, 0).expect("valid"),
        }
    }
}

impl FromStr for PeakWindow {
    type Err = Error;

    /// `HH:MM-HH:MM` or `HH-HH`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("peak window {s:?} is not HH:MM-HH:MM"));
        let parse = |t: &str| {
            let t = t.trim();
            NaiveTime::parse_from_str(t, "%H:%M")
                .or_else(|_| NaiveTime::parse_from_str(&format!("{t}:00"), "%H:%M"))
                .ok()
        };
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let (start, end) = (parse(a).ok_or_else(bad)?, parse(b).ok_or_else(bad)?);
        if start >= end {
            return Err(bad());
        }
        Ok(PeakWindow { start, end })
    }
}

impl fmt::Display for PeakWindow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}",
            self.start.format("%H:%M"),
            self.end.format("%H:%M")
        )
    }
}

/// Which minutes enter the comparison.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgreementFilter {
    pub timezone: Tz,
    /// Allowed local weekdays; `None` allows every day.
    pub weekdays: Option<&'static [Weekday]>,
    pub peak: Option<PeakWindow>,
}

pub const WORKDAYS: &[Weekday] = &[
    Weekday::Mon,
    Weekday::Tue,
    Weekday::Wed,
    Weekday::Thu,
    Weekday::Fri,
];

impl Default for AgreementFilter {
    /// Weekday afternoon peak in the default timezone.
    fn default() -> Self {
        AgreementFilter {
            timezone: DEFAULT_TIMEZONE,
            weekdays: Some(WORKDAYS),
            peak: Some(PeakWindow::default()),
        }
    }
}

impl AgreementFilter {
    pub fn everything() -> Self {
        AgreementFilter {
            timezone: DEFAULT_TIMEZONE,
            weekdays: None,
            peak: None,
        }
    }

    pub fn admits(&self, minute: DateTime<Utc>) -> bool {
        let local = minute.with_timezone(&self.timezone);
        let day_ok = self
            .weekdays
            .map_or(true, |days| days.contains(&local.weekday()));
        let time = NaiveTime::from_hms_opt(local.hour(), local.minute(), 0).expect("valid");
        let peak_ok = self.peak.map_or(true, |p| p.start <= time && time < p.end);
        day_ok && peak_ok
    }
}

/// Nearest whole minute, halves rounding up.
pub fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgreementCategory {
    BothAgreeWithGt,
    MethodsAgreeDifferFromGt,
    NewOnlyAgrees,
    RuleOnlyAgrees,
    AllDisagree,
}

impl AgreementCategory {
    pub const ALL: [AgreementCategory; 5] = [
        AgreementCategory::BothAgreeWithGt,
        AgreementCategory::MethodsAgreeDifferFromGt,
        AgreementCategory::NewOnlyAgrees,
        AgreementCategory::RuleOnlyAgrees,
        AgreementCategory::AllDisagree,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgreementCategory::BothAgreeWithGt => "both_agree_with_gt",
            AgreementCategory::MethodsAgreeDifferFromGt => "methods_agree_differ_from_gt",
            AgreementCategory::NewOnlyAgrees => "new_only_agrees",
            AgreementCategory::RuleOnlyAgrees => "rule_only_agrees",
            AgreementCategory::AllDisagree => "all_disagree",
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            AgreementCategory::BothAgreeWithGt => "Both methods agree with ground truth",
            AgreementCategory::MethodsAgreeDifferFromGt => {
                "Methods agree, differ from ground truth"
            }
            AgreementCategory::NewOnlyAgrees => "Only the distance-based method agrees",
            AgreementCategory::RuleOnlyAgrees => "Only the rule-based method agrees",
            AgreementCategory::AllDisagree => "All three disagree",
        }
    }

    /// Classifies already-rounded travel times.
    pub fn classify(rule: f64, ml: f64, gt: f64) -> Self {
        match (rule == gt, ml == gt, rule == ml) {
            (true, true, _) => AgreementCategory::BothAgreeWithGt,
            (false, false, true) => AgreementCategory::MethodsAgreeDifferFromGt,
            (false, true, _) => AgreementCategory::NewOnlyAgrees,
            (true, false, _) => AgreementCategory::RuleOnlyAgrees,
            (false, false, false) => AgreementCategory::AllDisagree,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementTable {
    pub counts: BTreeMap<AgreementCategory, usize>,
    /// Whole percentages summing to exactly 100 (largest remainder), all zero when empty.
    pub percentages: BTreeMap<AgreementCategory, u32>,
    pub total: usize,
}

impl AgreementTable {
    pub fn count(&self, c: AgreementCategory) -> usize {
        self.counts.get(&c).copied().unwrap_or(0)
    }

    pub fn percentage(&self, c: AgreementCategory) -> u32 {
        self.percentages.get(&c).copied().unwrap_or(0)
    }
}

fn largest_remainder(counts: &[usize; 5], total: usize) -> [u32; 5] {
    if total == 0 {
        return [0; 5];
    }
    let exact: Vec<f64> = counts
        .iter()
        .map(|c| *c as f64 * 100.0 / total as f64)
        .collect();
    let mut out: [u32; 5] = std::array::from_fn(|i| exact[i].floor() as u32);
    let short = 100 - out.iter().sum::<u32>();
    let mut order: Vec<usize> = (0..5).collect();
    // Largest fractional part first; earlier categories win exact ties.
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    for &i in order.iter().take(short as usize) {
        out[i] += 1;
    }
    out
}

/// Minutes where all three series are present and the filter admits them.
fn shared_minutes<'a>(
    rule: &'a TravelTimeSeries,
    ml: &'a TravelTimeSeries,
    gt: &'a TravelTimeSeries,
    filter: &'a AgreementFilter,
) -> impl Iterator<Item = (f64, f64, f64)> + 'a {
    gt.minutes.iter().filter_map(move |(m, g)| {
        let g = (*g)?;
        let r = rule.get(*m)?;
        let n = ml.get(*m)?;
        filter.admits(*m).then_some((r, n, g))
    })
}

pub fn agreement_table(
    rule: &TravelTimeSeries,
    ml: &TravelTimeSeries,
    gt: &TravelTimeSeries,
    filter: &AgreementFilter,
) -> AgreementTable {
    let mut counts = [0usize; 5];
    for (r, n, g) in shared_minutes(rule, ml, gt, filter) {
        let c = AgreementCategory::classify(round_half_up(r), round_half_up(n), round_half_up(g));
        counts[c as usize] += 1;
    }
    let total = counts.iter().sum();
    let pct = largest_remainder(&counts, total);
    AgreementTable {
        counts: AgreementCategory::ALL
            .iter()
            .map(|c| (*c, counts[*c as usize]))
            .collect(),
        percentages: AgreementCategory::ALL
            .iter()
            .map(|c| (*c, pct[*c as usize]))
            .collect(),
        total,
    }
}

/// Which method was closer to ground truth on the all-disagree minutes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisagreementBreakdown {
    pub minutes: usize,
    pub ml_closer: usize,
    pub rule_closer: usize,
    pub ties: usize,
    pub ml_closer_share: f64,
    pub rule_closer_share: f64,
    /// Mean of `|rule - gt| - |ml - gt|` over the minutes where ml was closer.
    pub ml_mean_margin: Option<f64>,
    /// Mean of `|ml - gt| - |rule - gt|` over the minutes where rule was closer.
    pub rule_mean_margin: Option<f64>,
}

pub fn disagreement_breakdown(
    rule: &TravelTimeSeries,
    ml: &TravelTimeSeries,
    gt: &TravelTimeSeries,
    filter: &AgreementFilter,
) -> Result<DisagreementBreakdown> {
    let (mut ml_margins, mut rule_margins, mut ties) = (Vec::new(), Vec::new(), 0);
    for (r, n, g) in shared_minutes(rule, ml, gt, filter) {
        let c = AgreementCategory::classify(round_half_up(r), round_half_up(n), round_half_up(g));
        if c != AgreementCategory::AllDisagree {
            continue;
        }
        let (er, en) = ((r - g).abs(), (n - g).abs());
        if en < er {
            ml_margins.push(er - en);
        } else if er < en {
            rule_margins.push(en - er);
        } else {
            ties += 1;
        }
    }
    let minutes = ml_margins.len() + rule_margins.len() + ties;
    if minutes == 0 {
        return Err(Error::EmptyCategory);
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    Ok(DisagreementBreakdown {
        minutes,
        ml_closer: ml_margins.len(),
        rule_closer: rule_margins.len(),
        ties,
        ml_closer_share: ml_margins.len() as f64 / minutes as f64,
        rule_closer_share: rule_margins.len() as f64 / minutes as f64,
        ml_mean_margin: mean(&ml_margins),
        rule_mean_margin: mean(&rule_margins),
    })
}
