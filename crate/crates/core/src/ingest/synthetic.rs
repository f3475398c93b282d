//! Seeded generator of 20-second detector data with injectable anomalies.
//!
//! Each regime is a Gaussian blob in `(speed, volume, occupancy)` with an
//! optional local time-of-day schedule. At every time step each detector draws
//! its regime from the regimes active at that hour, weighted by mixing weight,
//! then draws a reading from that regime. Anomalies overwrite selected rows
//! after the clean data exists, so the clean value of every row is known.

use std::collections::BTreeSet;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Timelike, Utc};
use chrono_tz::Tz;
use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Dataset, Provenance};
use crate::error::{Error, Result};
use crate::model::{
    parse_timezone, DetectorId, Direction, FeatureVector, Observation, SegmentKey, CADENCE_SECS,
};

/// One traffic regime of the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSpec {
    pub name: String,
    /// Raw-unit mean `(speed, volume, occupancy)`.
    pub mean: [f64; 3],
    /// Per-feature standard deviations; ignored when `covariance` is set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sd: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub covariance: Option<[[f64; 3]; 3]>,
    pub weight: f64,
    /// Local-hour windows `[start, end)` in which the regime may occur. Empty means all day.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hours: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AnomalyKind {
    /// A contiguous run of identical readings on one detector.
    StuckValue,
    /// Isolated implausible readings.
    PointOutlier,
    /// Enough similar bad readings to form a cluster of their own, mostly from one detector.
    AnomalousCluster,
}

/// Values written into injected rows: `mean + sd * N(0, 1)` per feature.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValuePattern {
    pub speed: f64,
    pub volume: f64,
    pub occupancy: f64,
    #[serde(default)]
    pub sd: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyInjection {
    pub kind: AnomalyKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector: Option<String>,
    /// Share of ALL generated rows to overwrite. Exclusive with `count`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<usize>,
    /// For anomalous clusters: share of the injected rows taken from `detector`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub primary_share: Option<f64>,
    pub pattern: ValuePattern,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub hours: Vec<[u32; 2]>,
}

const DEFAULT_PRIMARY_SHARE: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub highway: String,
    pub direction: Direction,
    #[serde(default = "default_timezone")]
    pub timezone: String,
    /// First local calendar day.
    pub start_date: NaiveDate,
    pub days: u32,
    pub detectors: Vec<String>,
    pub regimes: Vec<RegimeSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub anomalies: Vec<AnomalyInjection>,
    /// Probability that any single feature of a clean row is blanked out.
    #[serde(default)]
    pub missing_rate: f64,
}

fn default_timezone() -> String {
    "America/Los_Angeles".to_owned()
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| Error::FileUnreadable {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    /// Three regimes (light, free-flowing, congested) with a weekday-commute
    /// shaped schedule. Values are in raw units.
    pub fn three_regime(seed: u64, detectors: usize, days: u32) -> Self {
        ScenarioConfig {
            seed,
            highway: "I-405".into(),
            direction: Direction::North,
            timezone: default_timezone(),
            start_date: NaiveDate::from_ymd_opt(2015, 5, 1).expect("valid date"),
            days,
            detectors: (0..detectors).map(|i| format!("d{:02}", i + 1)).collect(),
            regimes: vec![
                RegimeSpec {
                    name: "light".into(),
                    mean: [63.0, 2.0, 2.5],
                    sd: Some([3.5, 1.0, 1.0]),
                    covariance: None,
                    weight: 0.35,
                    hours: vec![[0, 6], [21, 24]],
                },
                RegimeSpec {
                    name: "free-flowing".into(),
                    mean: [58.0, 9.0, 10.0],
                    sd: Some([4.0, 1.8, 2.5]),
                    covariance: None,
                    weight: 0.45,
                    hours: vec![[5, 22]],
                },
                RegimeSpec {
                    name: "congested".into(),
                    mean: [24.0, 12.0, 32.0],
                    sd: Some([6.0, 2.0, 6.0]),
                    covariance: None,
                    weight: 0.20,
                    hours: vec![[7, 10], [15, 19]],
                },
            ],
            anomalies: Vec::new(),
            missing_rate: 0.0,
        }
    }

    pub fn tz(&self) -> Result<Tz> {
        parse_timezone(&self.timezone)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidScenario(msg));
        self.tz()?;
        if self.days == 0 {
            return bad("days must be at least 1".into());
        }
        if self.detectors.is_empty() {
            return bad("detector roster is empty".into());
        }
        let roster: BTreeSet<&String> = self.detectors.iter().collect();
        if roster.len() != self.detectors.len() {
            return bad("detector roster has duplicates".into());
        }
        if self.regimes.is_empty() {
            return bad("no regimes".into());
        }
        let total: f64 = self.regimes.iter().map(|r| r.weight).sum();
        if self.regimes.iter().any(|r| !(r.weight >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return bad(format!(
                "mixing weights must be nonnegative and sum to 1, got {total}"
            ));
        }
        for r in &self.regimes {
            check_hours(&r.hours, &r.name)?;
            if let Some(sd) = r.sd {
                if sd.iter().any(|s| !(*s >= 0.0)) {
                    return bad(format!("regime '{}' has a negative sd", r.name));
                }
            }
            if let Some(cov) = r.covariance {
                let m = Matrix3::from_fn(|i, j| cov[i][j]);
                if (m - m.transpose()).abs().max() > 1e-12 {
                    return bad(format!("regime '{}' covariance is not symmetric", r.name));
                }
                if SymmetricEigen::new(m).eigenvalues.min() < -1e-9 {
                    return bad(format!("regime '{}' covariance is not PSD", r.name));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.missing_rate) {
            return bad("missing_rate must be in [0,1]".into());
        }
        for a in &self.anomalies {
            match (a.fraction, a.count) {
                (Some(f), None) if (0.0..=1.0).contains(&f) => {}
                (None, Some(_)) => {}
                _ => {
                    return bad(format!(
                        "{:?} needs exactly one of fraction in [0,1] or count",
                        a.kind
                    ))
                }
            }
            if let Some(share) = a.primary_share {
                if !(0.0..=1.0).contains(&share) {
                    return bad("primary_share must be in [0,1]".into());
                }
            }
            match &a.detector {
                Some(d) if !roster.contains(d) => {
                    return bad(format!("anomaly detector '{d}' is not in the roster"))
                }
                None if a.kind != AnomalyKind::PointOutlier => {
                    return bad(format!("{:?} needs a detector", a.kind))
                }
                _ => {}
            }
            if a.pattern.sd.iter().any(|s| !(*s >= 0.0)) {
                return bad("pattern sd must be nonnegative".into());
            }
            check_hours(&a.hours, "anomaly")?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON form; used as dataset provenance.
    pub fn fingerprint(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex_digest(&bytes)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn check_hours(hours: &[[u32; 2]], what: &str) -> Result<()> {
    for [start, end] in hours {
        if start >= end || *end > 24 {
            return Err(Error::InvalidScenario(format!(
                "{what}: hour window [{start}, {end}) is invalid"
            )));
        }
    }
    Ok(())
}

fn in_hours(hours: &[[u32; 2]], hour: u32) -> bool {
    hours.is_empty() || hours.iter().any(|[s, e]| (*s..*e).contains(&hour))
}

/// What the generator knows about each emitted row.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthRow {
    /// The reading a healthy detector would have reported.
    pub clean: FeatureVector,
    pub regime: usize,
    pub injected: Option<AnomalyKind>,
}

/// Generated observations plus the row-aligned truth behind them.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub truth: Vec<TruthRow>,
}

pub fn generate_synthetic(scenario: &ScenarioConfig) -> Result<Dataset> {
    generate_with_truth(scenario).map(|d| d.dataset)
}

struct Sampler {
    mean: Vector3<f64>,
    root: Matrix3<f64>,
}

impl Sampler {
    fn new(mean: [f64; 3], cov: Matrix3<f64>) -> Self {
        // Symmetric square root tolerates singular (zero-variance) regimes.
        let eig = SymmetricEigen::new(cov);
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let root = eig.eigenvectors * Matrix3::from_diagonal(&sqrt) * eig.eigenvectors.transpose();
        Sampler {
            mean: Vector3::from(mean),
            root,
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> [f64; 3] {
        let z = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
        let x = self.mean + self.root * z;
        [x[0], x[1], x[2]]
    }
}

fn regime_covariance(r: &RegimeSpec) -> Matrix3<f64> {
    match (r.covariance, r.sd) {
        (Some(c), _) => Matrix3::from_fn(|i, j| c[i][j]),
        (None, Some(sd)) => Matrix3::from_diagonal(&Vector3::from(sd).map(|s| s * s)),
        (None, None) => Matrix3::zeros(),
    }
}

/// Clamps a drawn vector into a physically valid reading.
fn to_reading(v: [f64; 3]) -> (f64, u32, f64) {
    let speed = v[0].max(0.0);
    let volume = v[1].round().max(0.0) as u32;
    let occupancy = v[2].clamp(0.0, 100.0);
    (speed, volume, occupancy)
}

fn pattern_draw(p: &ValuePattern, rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut out = [p.speed, p.volume, p.occupancy];
    for (x, sd) in out.iter_mut().zip(p.sd) {
        if sd > 0.0 {
            let z: f64 = StandardNormal.sample(rng);
            *x += sd * z;
        }
    }
    out
}

fn local_midnight(tz: Tz, date: NaiveDate) -> DateTime<Utc> {
    let naive = date.and_hms_opt(0, 0, 0).expect("midnight exists");
    tz.from_local_datetime(&naive)
        .earliest()
        .expect("local midnight exists")
        .with_timezone(&Utc)
}

pub fn generate_with_truth(scenario: &ScenarioConfig) -> Result<SyntheticData> {
    scenario.validate()?;
    let tz = scenario.tz()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);

    let samplers: Vec<Sampler> = scenario
        .regimes
        .iter()
        .map(|r| Sampler::new(r.mean, regime_covariance(r)))
        .collect();

    let start = local_midnight(tz, scenario.start_date);
    let end = local_midnight(
        tz,
        scenario.start_date + Duration::days(i64::from(scenario.days)),
    );
    let steps = ((end - start).num_seconds() / CADENCE_SECS) as usize;
    let times: Vec<DateTime<Utc>> = (0..steps)
        .map(|i| start + Duration::seconds(i as i64 * CADENCE_SECS))
        .collect();
    let local_hours: Vec<u32> = times.iter().map(|t| t.with_timezone(&tz).hour()).collect();

    // Regime weights per local hour, renormalized over the active regimes.
    let hour_weights: Vec<Vec<f64>> = (0..24)
        .map(|h| {
            let active: Vec<f64> = scenario
                .regimes
                .iter()
                .map(|r| if in_hours(&r.hours, h) { r.weight } else { 0.0 })
                .collect();
            if active.iter().sum::<f64>() > 0.0 {
                active
            } else {
                scenario.regimes.iter().map(|r| r.weight).collect()
            }
        })
        .collect();

    let segment = SegmentKey::new(scenario.highway.clone(), scenario.direction);
    let roster: Vec<&String> = scenario
        .detectors
        .iter()
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut observations = Vec::with_capacity(roster.len() * steps);
    let mut truth = Vec::with_capacity(roster.len() * steps);
    let mut detector_of_row = Vec::with_capacity(roster.len() * steps);

    for (d, det) in roster.iter().enumerate() {
        let id = DetectorId::from(det.as_str());
        for (t, ts) in times.iter().enumerate() {
            let weights = &hour_weights[local_hours[t] as usize];
            let regime = pick_weighted(weights, &mut rng);
            let (speed, volume, occupancy) = to_reading(samplers[regime].draw(&mut rng));
            observations.push(Observation {
                detector_id: id.clone(),
                segment: segment.clone(),
                timestamp: *ts,
                speed: Some(speed),
                volume: Some(volume),
                occupancy: Some(occupancy),
            });
            truth.push(TruthRow {
                clean: FeatureVector::new(speed, f64::from(volume), occupancy),
                regime,
                injected: None,
            });
            detector_of_row.push(d);
        }
    }

    let total = observations.len();
    for inj in &scenario.anomalies {
        let wanted = match (inj.fraction, inj.count) {
            (Some(f), _) => (f * total as f64).round() as usize,
            (None, Some(c)) => c,
            (None, None) => unreachable!("validated"),
        };
        let primary = inj
            .detector
            .as_ref()
            .map(|d| roster.iter().position(|r| *r == d).expect("validated"));
        let eligible = |want_primary: Option<bool>, truth: &[TruthRow]| -> Vec<usize> {
            (0..total)
                .filter(|&i| truth[i].injected.is_none())
                .filter(|&i| in_hours(&inj.hours, local_hours[i % steps]))
                .filter(|&i| match (want_primary, primary) {
                    (Some(true), Some(p)) => detector_of_row[i] == p,
                    (Some(false), Some(p)) => detector_of_row[i] != p,
                    _ => true,
                })
                .collect()
        };

        let rows: Vec<usize> = match inj.kind {
            AnomalyKind::StuckValue => {
                let pool = eligible(Some(true), &truth);
                if pool.len() < wanted {
                    return Err(not_enough(inj.kind, wanted, pool.len()));
                }
                let start = if pool.len() == wanted {
                    0
                } else {
                    rng.random_range(0..=pool.len() - wanted)
                };
                pool[start..start + wanted].to_vec()
            }
            AnomalyKind::PointOutlier => {
                let pool = eligible(primary.map(|_| true), &truth);
                choose(&pool, wanted, &mut rng)
                    .ok_or_else(|| not_enough(inj.kind, wanted, pool.len()))?
            }
            AnomalyKind::AnomalousCluster => {
                let share = inj.primary_share.unwrap_or(DEFAULT_PRIMARY_SHARE);
                let others = eligible(Some(false), &truth);
                // Round up so the planted share is never below the configured one.
                let mut n_primary =
                    ((wanted as f64 * share) - 1e-9).ceil().min(wanted as f64) as usize;
                if others.is_empty() {
                    n_primary = wanted;
                }
                let pool = eligible(Some(true), &truth);
                let mut rows = choose(&pool, n_primary, &mut rng)
                    .ok_or_else(|| not_enough(inj.kind, n_primary, pool.len()))?;
                rows.extend(
                    choose(&others, wanted - n_primary, &mut rng)
                        .ok_or_else(|| not_enough(inj.kind, wanted - n_primary, others.len()))?,
                );
                rows.sort_unstable();
                rows
            }
        };

        for i in rows {
            let (speed, volume, occupancy) = to_reading(pattern_draw(&inj.pattern, &mut rng));
            let obs = &mut observations[i];
            obs.speed = Some(speed);
            obs.volume = Some(volume);
            obs.occupancy = Some(occupancy);
            truth[i].injected = Some(inj.kind);
        }
    }

    if scenario.missing_rate > 0.0 {
        for (obs, row) in observations.iter_mut().zip(&truth) {
            if row.injected.is_some() {
                continue;
            }
            if rng.random::<f64>() < scenario.missing_rate {
                obs.speed = None;
            }
            if rng.random::<f64>() < scenario.missing_rate {
                obs.volume = None;
            }
            if rng.random::<f64>() < scenario.missing_rate {
                obs.occupancy = None;
            }
        }
    }

    let dataset = Dataset::new(
        observations,
        Provenance::Generator {
            config_sha256: scenario.fingerprint(),
        },
    );
    Ok(SyntheticData { dataset, truth })
}

fn pick_weighted(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, w) in weights.iter().enumerate() {
        if u < *w {
            return i;
        }
        u -= w;
    }
    weights.iter().rposition(|w| *w > 0.0).unwrap_or(0)
}

fn choose(pool: &[usize], n: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    if n > pool.len() {
        return None;
    }
    let mut picked: Vec<usize> = sample(rng, pool.len(), n)
        .into_iter()
        .map(|j| pool[j])
        .collect();
    picked.sort_unstable();
    Some(picked)
}

fn not_enough(kind: AnomalyKind, wanted: usize, available: usize) -> Error {
    Error::InvalidScenario(format!(
        "{kind:?} needs {wanted} eligible rows, only {available} available"
    ))
}
