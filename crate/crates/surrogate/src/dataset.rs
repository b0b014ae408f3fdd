//! Loaders that join weather-sequence CSVs with their labels into
//! training samples.
//!
//! Simulated data: `area_id,episode_id,hour,w01..w16` joined with
//! `area_id,episode_id,rs`. Ingested (real) data:
//! `system_id,event_id,hour,v01..v18` joined with the score table
//! `system_id,event_id,start_hour,end_hour,rs`, where `hour` is the
//! offset into the event and `start_hour` anchors it in absolute time.

use crate::SurrogateError;
use chrono::{DateTime, Datelike};
use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::path::Path;

/// One (system, event) weather sequence with its resilience label.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSample {
    pub system_id: String,
    pub sequence: Vec<Vec<f64>>,
    pub label: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub samples: Vec<TrainingSample>,
    /// Distinct system ids in one-hot order (numeric-aware sort).
    pub systems: Vec<String>,
    pub input_dim: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Numbers sort numerically, everything else lexicographically after
/// them, so area ids come out as 1, 2, …, 10 rather than 1, 10, 2.
pub(crate) fn system_order(a: &str, b: &str) -> Ordering {
    gridres_core::system_id_order(a, b)
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, SurrogateError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| SurrogateError::Csv(format!("{}: {e}", path.display())))
}

fn check_header(
    path: &Path,
    got: &csv::StringRecord,
    fixed: &[&str],
    feature_prefix: char,
) -> Result<usize, SurrogateError> {
    if got.len() <= fixed.len() {
        return Err(SurrogateError::Csv(format!(
            "{}: expected header starting {:?} plus feature columns, got {} columns",
            path.display(),
            fixed,
            got.len()
        )));
    }
    for (i, want) in fixed.iter().enumerate() {
        if &got[i] != *want {
            return Err(SurrogateError::Csv(format!(
                "{}: header column {i} is {:?}, expected {:?}",
                path.display(),
                &got[i],
                want
            )));
        }
    }
    for i in fixed.len()..got.len() {
        if !got[i].starts_with(feature_prefix) {
            return Err(SurrogateError::Csv(format!(
                "{}: feature column {i} is {:?}, expected a {feature_prefix}-prefixed name",
                path.display(),
                &got[i]
            )));
        }
    }
    Ok(got.len() - fixed.len())
}

fn parse_f64(path: &Path, line: u64, field: &str, raw: &str) -> Result<f64, SurrogateError> {
    raw.parse::<f64>().map_err(|_| {
        SurrogateError::Csv(format!(
            "{} line {line}: bad {field} value {raw:?}",
            path.display()
        ))
    })
}

fn parse_u64(path: &Path, line: u64, field: &str, raw: &str) -> Result<u64, SurrogateError> {
    raw.parse::<u64>().map_err(|_| {
        SurrogateError::Csv(format!(
            "{} line {line}: bad {field} value {raw:?}",
            path.display()
        ))
    })
}

type SequenceMap = BTreeMap<(String, u64), Vec<(u64, Vec<f64>)>>;

fn load_sequences(
    path: &Path,
    fixed: &[&str; 3],
    feature_prefix: char,
) -> Result<(SequenceMap, usize), SurrogateError> {
    let mut reader = csv_reader(path)?;
    let header = reader
        .headers()
        .map_err(|e| SurrogateError::Csv(format!("{}: {e}", path.display())))?
        .clone();
    let input_dim = check_header(path, &header, fixed, feature_prefix)?;
    let mut map: SequenceMap = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record
            .map_err(|e| SurrogateError::Csv(format!("{} line {line}: {e}", path.display())))?;
        if record.len() != 3 + input_dim {
            return Err(SurrogateError::Csv(format!(
                "{} line {line}: expected {} fields, got {}",
                path.display(),
                3 + input_dim,
                record.len()
            )));
        }
        let system = record[0].to_string();
        let event = parse_u64(path, line, fixed[1], &record[1])?;
        let hour = parse_u64(path, line, fixed[2], &record[2])?;
        let features = (0..input_dim)
            .map(|j| parse_f64(path, line, &header[3 + j], &record[3 + j]))
            .collect::<Result<Vec<f64>, _>>()?;
        map.entry((system, event)).or_default().push((hour, features));
    }
    for ((system, event), rows) in map.iter_mut() {
        rows.sort_by_key(|(hour, _)| *hour);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(SurrogateError::Csv(format!(
                    "{}: duplicate hour {} for system {system} event {event}",
                    path.display(),
                    pair[0].0
                )));
            }
        }
    }
    Ok((map, input_dim))
}

fn finish(
    mut labelled: Vec<TrainingSample>,
    input_dim: usize,
) -> Result<Dataset, SurrogateError> {
    if labelled.is_empty() {
        return Err(SurrogateError::EmptyDataset("no joined samples".into()));
    }
    labelled.sort_by(|a, b| system_order(&a.system_id, &b.system_id));
    let mut systems: Vec<String> =
        labelled.iter().map(|s| s.system_id.clone()).collect();
    systems.dedup();
    Ok(Dataset { samples: labelled, systems, input_dim })
}

/// Load simulator output: weather rows joined one-to-one with labels.
pub fn load_sim_dataset(
    weather_path: &Path,
    labels_path: &Path,
) -> Result<Dataset, SurrogateError> {
    let (sequences, input_dim) =
        load_sequences(weather_path, &["area_id", "episode_id", "hour"], 'w')?;

    let mut reader = csv_reader(labels_path)?;
    let header = reader
        .headers()
        .map_err(|e| SurrogateError::Csv(format!("{}: {e}", labels_path.display())))?
        .clone();
    if header.len() != 3 || &header[0] != "area_id" || &header[1] != "episode_id" || &header[2] != "rs" {
        return Err(SurrogateError::Csv(format!(
            "{}: expected header area_id,episode_id,rs",
            labels_path.display()
        )));
    }
    let mut labels: BTreeMap<(String, u64), f64> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record.map_err(|e| {
            SurrogateError::Csv(format!("{} line {line}: {e}", labels_path.display()))
        })?;
        let key = (
            record[0].to_string(),
            parse_u64(labels_path, line, "episode_id", &record[1])?,
        );
        let rs = parse_f64(labels_path, line, "rs", &record[2])?;
        if labels.insert(key.clone(), rs).is_some() {
            return Err(SurrogateError::Csv(format!(
                "{}: duplicate label for area {} episode {}",
                labels_path.display(),
                key.0,
                key.1
            )));
        }
    }

    let mut samples = Vec::with_capacity(sequences.len());
    for ((system, event), rows) in &sequences {
        let label = labels.remove(&(system.clone(), *event)).ok_or_else(|| {
            SurrogateError::Csv(format!(
                "no label for area {system} episode {event} in {}",
                labels_path.display()
            ))
        })?;
        samples.push(TrainingSample {
            system_id: system.clone(),
            sequence: rows.iter().map(|(_, f)| f.clone()).collect(),
            label,
        });
    }
    if let Some(((system, event), _)) = labels.into_iter().next() {
        return Err(SurrogateError::Csv(format!(
            "label for area {system} episode {event} has no weather rows"
        )));
    }
    finish(samples, input_dim)
}

/// sin/cos day-of-year pair for an absolute epoch hour.
pub fn day_of_year_embedding(epoch_hour: i64) -> (f64, f64) {
    let doy = DateTime::from_timestamp(epoch_hour * 3600, 0)
        .map(|t| t.ordinal())
        .unwrap_or(1) as f64;
    let angle = 2.0 * std::f64::consts::PI * doy / 365.25;
    (angle.sin(), angle.cos())
}

/// Load ingested weather events with labels from the score table.
/// `embed_time` appends the day-of-year sinusoid pair to every
/// timestep, anchored at the event's absolute start hour.
pub fn load_real_dataset(
    weather_path: &Path,
    scores_path: &Path,
    embed_time: bool,
) -> Result<Dataset, SurrogateError> {
    let (sequences, base_dim) =
        load_sequences(weather_path, &["system_id", "event_id", "hour"], 'v')?;

    let mut reader = csv_reader(scores_path)?;
    let header = reader
        .headers()
        .map_err(|e| SurrogateError::Csv(format!("{}: {e}", scores_path.display())))?
        .clone();
    let want = ["system_id", "event_id", "start_hour", "end_hour", "rs"];
    if header.len() != want.len() || want.iter().enumerate().any(|(i, w)| &header[i] != *w) {
        return Err(SurrogateError::Csv(format!(
            "{}: expected header system_id,event_id,start_hour,end_hour,rs",
            scores_path.display()
        )));
    }
    let mut scores: BTreeMap<(String, u64), (u64, f64)> = BTreeMap::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record.map_err(|e| {
            SurrogateError::Csv(format!("{} line {line}: {e}", scores_path.display()))
        })?;
        let key = (
            record[0].to_string(),
            parse_u64(scores_path, line, "event_id", &record[1])?,
        );
        let start = parse_u64(scores_path, line, "start_hour", &record[2])?;
        let rs = parse_f64(scores_path, line, "rs", &record[4])?;
        scores.insert(key, (start, rs));
    }

    let input_dim = base_dim + if embed_time { 2 } else { 0 };
    let mut samples = Vec::with_capacity(sequences.len());
    for ((system, event), rows) in &sequences {
        let (start_hour, rs) = *scores.get(&(system.clone(), *event)).ok_or_else(|| {
            SurrogateError::Csv(format!(
                "no score row for system {system} event {event} in {}",
                scores_path.display()
            ))
        })?;
        let sequence = rows
            .iter()
            .map(|(offset, features)| {
                let mut step = features.clone();
                if embed_time {
                    let (s, c) = day_of_year_embedding(start_hour as i64 + *offset as i64);
                    step.push(s);
                    step.push(c);
                }
                step
            })
            .collect();
        samples.push(TrainingSample { system_id: system.clone(), sequence, label: rs });
    }
    finish(samples, input_dim)
}
