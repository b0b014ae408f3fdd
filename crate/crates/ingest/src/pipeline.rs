//! The end-to-end ingestion pipeline: parse → downsample → normalize →
//! extract → filter → score.

use crate::events::{events_to_scores, extract_events, filter_systems, OutageEvent, ScoreRow};
use crate::series::{downsample_hourly, normalize_with_table, parse_outage_csv, PopulationTable};
use crate::IngestError;
use std::collections::BTreeMap;
use std::path::Path;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IngestConfig {
    /// Customers → affected-individuals multiplier.
    pub scale: f64,
    pub threshold: f64,
    pub merge_gap_hours: u32,
    pub min_duration_hours: u32,
    pub min_events: usize,
    /// Systems excluded by operator judgment (for example, late
    /// onboarding makes their early history unreliable).
    pub exclude_systems: Vec<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            scale: 2.0,
            threshold: 0.1,
            merge_gap_hours: 3,
            min_duration_hours: 6,
            min_events: 2,
            exclude_systems: Vec::new(),
        }
    }
}

impl IngestConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.scale > 0.0) {
            return Err(IngestError::BadConfig(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(IngestError::BadConfig(format!(
                "threshold must lie in (0,1), got {}",
                self.threshold
            )));
        }
        if self.min_duration_hours < 2 {
            return Err(IngestError::BadConfig(format!(
                "min_duration_hours must be at least 2 for a trapezoid window, got {}",
                self.min_duration_hours
            )));
        }
        if self.min_events < 1 {
            return Err(IngestError::BadConfig("min_events must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestReport {
    pub scores: Vec<ScoreRow>,
    pub events: Vec<OutageEvent>,
    pub systems_seen: usize,
    pub systems_kept: usize,
    /// Systems dropped for having too few events (excluded systems are
    /// not listed; they were never processed).
    pub dropped_systems: Vec<String>,
}

pub fn run_pipeline(
    outage_csv: &Path,
    population_csv: &Path,
    config: &IngestConfig,
) -> Result<IngestReport, IngestError> {
    config.validate()?;
    let population = PopulationTable::from_csv(population_csv)?;
    let mut groups: BTreeMap<String, Vec<OutageEvent>> = BTreeMap::new();
    let mut systems_seen = 0;
    for raw in parse_outage_csv(outage_csv)? {
        if config.exclude_systems.contains(&raw.system_id) {
            continue;
        }
        systems_seen += 1;
        let hourly = downsample_hourly(&raw)?;
        let normalized = normalize_with_table(&hourly, &population, config.scale)?;
        let events = extract_events(
            &normalized,
            config.threshold,
            config.merge_gap_hours,
            config.min_duration_hours,
        )?;
        groups.insert(raw.system_id.clone(), events);
    }
    let before: Vec<String> = groups.keys().cloned().collect();
    let kept = filter_systems(groups, config.min_events);
    let dropped_systems: Vec<String> =
        before.into_iter().filter(|s| !kept.contains_key(s)).collect();
    let systems_kept = kept.len();
    let events: Vec<OutageEvent> = kept.into_values().flatten().collect();
    let scores = events_to_scores(&events)?;
    Ok(IngestReport {
        scores,
        events,
        systems_seen,
        systems_kept,
        dropped_systems,
    })
}

/// Write the score table as `system_id,event_id,start_hour,end_hour,rs`.
pub fn write_scores_csv(scores: &[ScoreRow], path: &Path) -> Result<(), IngestError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(["system_id", "event_id", "start_hour", "end_hour", "rs"])?;
    for row in scores {
        writer.write_record([
            row.system_id.as_str(),
            &row.event_id.to_string(),
            &row.start_hour.to_string(),
            &row.end_hour.to_string(),
            &format!("{}", row.rs),
        ])?;
    }
    writer.flush()?;
    Ok(())
}
