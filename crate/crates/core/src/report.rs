//! Plot-ready output files. Every file starts with a format-version comment
//! line followed by a CSV header row.

use std::fmt::Write as _;
use std::io::Write;

use serde::Serialize;

use crate::anomaly::DriftRecord;
use crate::clustering::{ClusterModel, ElbowCurve};
use crate::error::{Error, Result};
use crate::ingest::csv_io::{observation_cells, OBSERVATION_COLUMNS};
use crate::io::{csv_writer, fmt6, opt_cell};
use crate::model::{format_timestamp, FEATURE_NAMES};
use crate::regimes::RegimeSeries;
use crate::scoring::ScoredObservation;
use crate::traveltime::{
    AgreementCategory, AgreementTable, CleaningOutcome, DisagreementBreakdown,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpiderRow {
    pub cluster_index: usize,
    pub axis_name: &'static str,
    pub raw_value: f64,
    /// `raw_value` over the largest value on this axis among the centers.
    pub normalized_value: f64,
}

/// One row per center and axis, in the model's speed-ascending order.
pub fn spider_rows(model: &ClusterModel) -> Vec<SpiderRow> {
    let max: [f64; 3] = std::array::from_fn(|j| {
        model
            .centers
            .iter()
            .map(|c| c[j])
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let mut rows = Vec::with_capacity(3 * model.k());
    for (i, c) in model.centers.iter().enumerate() {
        for j in 0..3 {
            let normalized_value = if max[j] > 0.0 {
                (c[j] / max[j]).clamp(0.0, 1.0)
            } else {
                1.0
            };
            rows.push(SpiderRow {
                cluster_index: i,
                axis_name: FEATURE_NAMES[j],
                raw_value: c[j],
                normalized_value,
            });
        }
    }
    rows
}

pub fn write_spider<W: Write>(out: W, model: &ClusterModel) -> Result<usize> {
    let mut w = csv_writer(out, "spider")?;
    let rows = spider_rows(model);
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows.len())
}

/// `k, avg_sq_error, selected`, with `selected` true on the chosen k.
pub fn write_elbow<W: Write>(out: W, curve: &ElbowCurve, selected: usize) -> Result<usize> {
    let mut w = csv_writer(out, "elbow")?;
    w.write_record(["k", "avg_sq_error", "selected"])?;
    for p in &curve.points {
        w.write_record([
            p.k.to_string(),
            p.avg_sq_error.to_string(),
            (p.k == selected).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(curve.points.len())
}

/// Input columns followed by the score; unscoreable rows leave the score cells empty.
pub fn write_scored<W: Write>(out: W, rows: &[ScoredObservation]) -> Result<usize> {
    let mut w = csv_writer(out, "scored")?;
    let mut header = OBSERVATION_COLUMNS.to_vec();
    header.extend(["regime_index", "distance", "band", "is_outlier"]);
    w.write_record(&header)?;
    for r in rows {
        let mut cells = observation_cells(&r.observation).to_vec();
        match r.score() {
            Some(s) => cells.extend([
                s.regime_index.to_string(),
                fmt6(s.distance),
                s.band.as_str().to_owned(),
                s.is_outlier.to_string(),
            ]),
            None => cells.extend(["", "", "unscoreable", ""].map(str::to_owned)),
        }
        w.write_record(&cells)?;
    }
    w.flush()?;
    Ok(rows.len())
}

/// Raw and smoothed series of the same detector, side by side.
pub fn write_regime_series<W: Write>(
    out: W,
    pairs: &[(RegimeSeries, RegimeSeries)],
) -> Result<usize> {
    let mut w = csv_writer(out, "regimes")?;
    w.write_record([
        "detector_id",
        "timestamp",
        "regime_index",
        "distance",
        "smoothed_regime_index",
    ])?;
    let mut n = 0;
    for (raw, smooth) in pairs {
        if raw.entries.len() != smooth.entries.len() || raw.detector_id != smooth.detector_id {
            return Err(Error::InvalidConfig(
                "raw and smoothed series are not aligned".into(),
            ));
        }
        for (a, b) in raw.entries.iter().zip(&smooth.entries) {
            w.write_record([
                raw.detector_id.to_string(),
                format_timestamp(a.timestamp),
                opt_cell(a.regime_index),
                a.distance.map(fmt6).unwrap_or_default(),
                opt_cell(b.regime_index),
            ])?;
            n += 1;
        }
    }
    w.flush()?;
    Ok(n)
}

/// One row per input observation with its cleaning decision.
pub fn write_cleaning<W: Write>(out: W, outcome: &CleaningOutcome) -> Result<usize> {
    let mut w = csv_writer(out, "cleaning")?;
    w.write_record(["detector_id", "timestamp", "decision", "reason"])?;
    for r in &outcome.rows {
        let (decision, reason) = match r.dropped {
            Some(d) => ("dropped", d.token()),
            None => ("kept", ""),
        };
        w.write_record([
            r.observation.detector_id.as_str(),
            &format_timestamp(r.observation.timestamp),
            decision,
            reason,
        ])?;
    }
    w.flush()?;
    Ok(outcome.rows.len())
}

/// One agreement table per row label.
pub fn write_agreement<W: Write>(out: W, tables: &[(String, AgreementTable)]) -> Result<usize> {
    let mut w = csv_writer(out, "agreement")?;
    w.write_record(["table", "category", "count", "percent", "total"])?;
    let mut n = 0;
    for (label, t) in tables {
        for c in AgreementCategory::ALL {
            w.write_record([
                label.clone(),
                c.as_str().to_owned(),
                t.count(c).to_string(),
                t.percentage(c).to_string(),
                t.total.to_string(),
            ])?;
            n += 1;
        }
    }
    w.flush()?;
    Ok(n)
}

/// Text rendering: one row per category, one column per table.
pub fn format_agreement(
    tables: &[(String, AgreementTable)],
    breakdown: Option<&DisagreementBreakdown>,
) -> String {
    let width = AgreementCategory::ALL
        .iter()
        .map(|c| c.description().len())
        .max()
        .unwrap_or(0);
    let mut s = String::new();
    let _ = write!(s, "{:width$}", "");
    for (label, _) in tables {
        let _ = write!(s, "  {label:>12}");
    }
    s.push('\n');
    for c in AgreementCategory::ALL {
        let _ = write!(s, "{:width$}", c.description());
        for (_, t) in tables {
            let _ = write!(s, "  {:>11}%", t.percentage(c));
        }
        s.push('\n');
    }
    let _ = write!(s, "{:width$}", "Minutes compared");
    for (_, t) in tables {
        let _ = write!(s, "  {:>12}", t.total);
    }
    s.push('\n');
    if let Some(b) = breakdown {
        let margin = |m: Option<f64>| m.map(|m| format!("{m:.2}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            s,
            "\nOn {} all-disagree minutes: distance-based closer {:.1}% (mean margin {} min), \
             rule-based closer {:.1}% (mean margin {} min), ties {}",
            b.minutes,
            b.ml_closer_share * 100.0,
            margin(b.ml_mean_margin),
            b.rule_closer_share * 100.0,
            margin(b.rule_mean_margin),
            b.ties
        );
    }
    s
}

pub fn write_drift_history<W: Write>(out: W, records: &[DriftRecord]) -> Result<usize> {
    let mut w = csv_writer(out, "drift")?;
    w.write_record(["period_a", "period_b", "value"])?;
    for r in records {
        w.write_record([r.period_a.clone(), r.period_b.clone(), fmt6(r.value)])?;
    }
    w.flush()?;
    Ok(records.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::{fit_partition, FitConfig};
    use crate::ingest::{generate_synthetic, ScenarioConfig};
    use crate::model::TemporalGroup;

    fn model(k: usize) -> ClusterModel {
        let obs = generate_synthetic(&ScenarioConfig::three_regime(5, 1, 1)).unwrap();
        let cfg = FitConfig {
            k: Some(k),
            restarts: 2,
            ..FitConfig::default()
        };
        fit_partition(obs.observations(), TemporalGroup::All, &cfg)
            .unwrap()
            .model
    }

    #[test]
    fn spider_shape_and_normalization() {
        let m = model(3);
        let rows = spider_rows(&m);
        assert_eq!(rows.len(), 9);
        let speeds: Vec<_> = rows.iter().filter(|r| r.axis_name == "speed").collect();
        assert_eq!(speeds.last().unwrap().normalized_value, 1.0);
        assert!(rows
            .iter()
            .all(|r| (0.0..=1.0).contains(&r.normalized_value)));
        assert!(spider_rows(&model(1))
            .iter()
            .all(|r| r.normalized_value == 1.0));
    }

    #[test]
    fn files_start_with_version_line() {
        let mut buf = Vec::new();
        write_spider(&mut buf, &model(2)).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("# regimeclean-format: 1"));
        assert_eq!(
            lines.next().unwrap(),
            "cluster_index,axis_name,raw_value,normalized_value"
        );
        assert_eq!(lines.count(), 6);
    }

    #[test]
    fn elbow_marks_selection() {
        let curve = ElbowCurve::from_errors(1, &[3.0, 1.0, 0.5]);
        let mut buf = Vec::new();
        write_elbow(&mut buf, &curve, 2).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\n2,1,true\n"));
        assert!(text.contains("\n1,3,false\n"));
    }
}
