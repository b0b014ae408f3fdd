//! Event extraction from normalized outage series.
//!
//! An event is a maximal stretch of hours with the outage fraction at
//! or above the threshold; nearby stretches are merged across short
//! gaps (missing or sub-threshold hours get linearly interpolated
//! values), and merged stretches shorter than the minimum duration are
//! dropped.

use crate::series::NormalizedOutageSeries;
use crate::IngestError;
use gridres_core::{trapezoid_resilience, PerformanceCurve};
use std::collections::BTreeMap;

#[derive(Debug, Clone, PartialEq)]
pub struct OutageEvent {
    pub system_id: String,
    pub start_hour: i64,
    /// Inclusive last hour.
    pub end_hour: i64,
    /// Performance f(t) = 1 − fraction_out, one sample per hour.
    pub curve: PerformanceCurve,
}

/// One row of the score table.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ScoreRow {
    pub system_id: String,
    pub event_id: u32,
    pub start_hour: i64,
    pub end_hour: i64,
    pub rs: f64,
}

pub fn extract_events(
    series: &NormalizedOutageSeries,
    threshold: f64,
    merge_gap_hours: u32,
    min_duration_hours: u32,
) -> Result<Vec<OutageEvent>, IngestError> {
    // Maximal consecutive-hour runs at or above the threshold. A
    // missing hour breaks a run just like a calm one; the merge step
    // below may bridge it.
    let mut runs: Vec<Vec<(i64, f64)>> = Vec::new();
    let mut current: Vec<(i64, f64)> = Vec::new();
    for &(hour, fraction) in &series.samples {
        if fraction >= threshold {
            if let Some(&(prev_hour, _)) = current.last() {
                if hour != prev_hour + 1 {
                    runs.push(std::mem::take(&mut current));
                }
            }
            current.push((hour, fraction));
        } else if !current.is_empty() {
            runs.push(std::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        runs.push(current);
    }

    // Merge runs separated by at most merge_gap_hours, interpolating
    // linearly between the boundary values across the gap.
    let mut merged: Vec<Vec<(i64, f64)>> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            Some(prev) if run[0].0 - prev.last().unwrap().0 - 1 <= i64::from(merge_gap_hours) => {
                let (left_hour, left_value) = *prev.last().unwrap();
                let (right_hour, right_value) = run[0];
                let span = (right_hour - left_hour) as f64;
                for hour in left_hour + 1..right_hour {
                    let t = (hour - left_hour) as f64 / span;
                    prev.push((hour, left_value + t * (right_value - left_value)));
                }
                prev.extend(run);
            }
            _ => merged.push(run),
        }
    }

    merged
        .into_iter()
        .filter(|samples| samples.len() >= min_duration_hours as usize)
        .map(|samples| {
            let start_hour = samples[0].0;
            let end_hour = samples.last().unwrap().0;
            let f: Vec<f64> = samples.iter().map(|&(_, fraction)| 1.0 - fraction).collect();
            Ok(OutageEvent {
                system_id: series.system_id.clone(),
                start_hour,
                end_hour,
                curve: PerformanceCurve::new(start_hour, f)?,
            })
        })
        .collect()
}

/// Drop systems with fewer than `min_events` events.
pub fn filter_systems(
    groups: BTreeMap<String, Vec<OutageEvent>>,
    min_events: usize,
) -> BTreeMap<String, Vec<OutageEvent>> {
    groups
        .into_iter()
        .filter(|(_, events)| events.len() >= min_events)
        .collect()
}

/// Score every event with the resilience trapezoid; event ids count
/// per system in chronological order.
pub fn events_to_scores(events: &[OutageEvent]) -> Result<Vec<ScoreRow>, IngestError> {
    let mut counters: BTreeMap<&str, u32> = BTreeMap::new();
    events
        .iter()
        .map(|event| {
            let counter = counters.entry(event.system_id.as_str()).or_insert(0);
            let event_id = *counter;
            *counter += 1;
            Ok(ScoreRow {
                system_id: event.system_id.clone(),
                event_id,
                start_hour: event.start_hour,
                end_hour: event.end_hour,
                rs: trapezoid_resilience(&event.curve)?.value(),
            })
        })
        .collect()
}
