//! Raw outage series: CSV parsing, hourly downsampling, and
//! population-scaled normalization.

use crate::IngestError;
use chrono::{DateTime, Datelike, Utc};
use std::collections::BTreeMap;
use std::path::Path;

/// Sub-hourly outage counts for one system. Timestamps are epoch
/// minutes on a 15-minute grid, strictly increasing; gaps are allowed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawOutageSeries {
    pub system_id: String,
    /// (epoch_minute, customers_out)
    pub samples: Vec<(i64, u64)>,
}

/// Hourly maxima of a raw series. Missing hours are simply absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HourlySeries {
    pub system_id: String,
    /// (epoch_hour, customers_out), strictly increasing hours.
    pub samples: Vec<(i64, u64)>,
}

/// Hourly outage fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedOutageSeries {
    pub system_id: String,
    /// (epoch_hour, fraction_out)
    pub samples: Vec<(i64, f64)>,
}

/// Per-(system, year) population counts.
#[derive(Debug, Clone, Default)]
pub struct PopulationTable {
    entries: BTreeMap<(String, i32), u64>,
}

impl PopulationTable {
    pub fn insert(&mut self, system: &str, year: i32, population: u64) {
        self.entries.insert((system.to_string(), year), population);
    }

    pub fn lookup(&self, system: &str, year: i32) -> Result<u64, IngestError> {
        self.entries
            .get(&(system.to_string(), year))
            .copied()
            .ok_or_else(|| IngestError::MissingPopulation {
                system: system.to_string(),
                year,
            })
    }

    /// Load `system_id,year,population` rows.
    pub fn from_csv(path: &Path) -> Result<Self, IngestError> {
        let display = path.display().to_string();
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
        {
            let header = reader.headers()?;
            let want = ["system_id", "year", "population"];
            if header.len() != 3 || want.iter().enumerate().any(|(i, w)| &header[i] != *w) {
                return Err(IngestError::Parse {
                    path: display,
                    line: 1,
                    message: "expected header system_id,year,population".into(),
                });
            }
        }
        let mut table = Self::default();
        for (idx, record) in reader.records().enumerate() {
            let line = idx as u64 + 2;
            let record = record?;
            let parse_err = |message: String| IngestError::Parse {
                path: display.clone(),
                line,
                message,
            };
            if record.len() != 3 {
                return Err(parse_err(format!("expected 3 fields, got {}", record.len())));
            }
            let year: i32 = record[1]
                .parse()
                .map_err(|_| parse_err(format!("bad year {:?}", &record[1])))?;
            let population: i64 = record[2]
                .parse()
                .map_err(|_| parse_err(format!("bad population {:?}", &record[2])))?;
            if population <= 0 {
                return Err(IngestError::NonPositivePopulation {
                    system: record[0].to_string(),
                    year,
                    population,
                });
            }
            table.insert(&record[0], year, population as u64);
        }
        Ok(table)
    }
}

pub fn epoch_hour_year(epoch_hour: i64) -> i32 {
    DateTime::<Utc>::from_timestamp(epoch_hour * 3600, 0)
        .map(|t| t.year())
        .unwrap_or(1970)
}

/// Parse `timestamp_utc,system_id,customers_out` rows (RFC 3339
/// timestamps on a 15-minute grid) into per-system series.
pub fn parse_outage_csv(path: &Path) -> Result<Vec<RawOutageSeries>, IngestError> {
    let display = path.display().to_string();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    {
        let header = reader.headers()?;
        let want = ["timestamp_utc", "system_id", "customers_out"];
        if header.len() != 3 || want.iter().enumerate().any(|(i, w)| &header[i] != *w) {
            return Err(IngestError::Parse {
                path: display,
                line: 1,
                message: "expected header timestamp_utc,system_id,customers_out".into(),
            });
        }
    }
    let mut by_system: BTreeMap<String, Vec<(i64, u64)>> = BTreeMap::new();
    let mut total_rows = 0u64;
    for (idx, record) in reader.records().enumerate() {
        let line = idx as u64 + 2;
        let record = record?;
        let parse_err = |message: String| IngestError::Parse {
            path: display.clone(),
            line,
            message,
        };
        if record.len() != 3 {
            return Err(parse_err(format!("expected 3 fields, got {}", record.len())));
        }
        let stamp = DateTime::parse_from_rfc3339(&record[0])
            .map_err(|e| parse_err(format!("bad timestamp {:?}: {e}", &record[0])))?
            .with_timezone(&Utc);
        let seconds = stamp.timestamp();
        if seconds % 60 != 0 || (seconds / 60) % 15 != 0 {
            return Err(parse_err(format!(
                "timestamp {:?} is not on the 15-minute grid",
                &record[0]
            )));
        }
        let out: u64 = record[2]
            .parse()
            .map_err(|_| parse_err(format!("bad customers_out {:?}", &record[2])))?;
        by_system
            .entry(record[1].to_string())
            .or_default()
            .push((seconds / 60, out));
        total_rows += 1;
    }
    if total_rows == 0 {
        return Err(IngestError::Empty(format!("{display} has no data rows")));
    }
    let mut out = Vec::with_capacity(by_system.len());
    for (system_id, samples) in by_system {
        for pair in samples.windows(2) {
            if pair[1].0 <= pair[0].0 {
                return Err(IngestError::Parse {
                    path: display.clone(),
                    line: 0,
                    message: format!(
                        "timestamps for system {system_id} are not strictly increasing around epoch minute {}",
                        pair[1].0
                    ),
                });
            }
        }
        out.push(RawOutageSeries { system_id, samples });
    }
    Ok(out)
}

/// Collapse sub-hourly samples to one value per hour, keeping the
/// maximum within each hour (conservative: preserves outage peaks).
pub fn downsample_hourly(raw: &RawOutageSeries) -> Result<HourlySeries, IngestError> {
    if raw.samples.is_empty() {
        return Err(IngestError::Empty(format!(
            "system {} has no samples",
            raw.system_id
        )));
    }
    let mut hours: BTreeMap<i64, u64> = BTreeMap::new();
    for &(minute, out) in &raw.samples {
        let hour = minute.div_euclid(60);
        let entry = hours.entry(hour).or_insert(0);
        *entry = (*entry).max(out);
    }
    Ok(HourlySeries {
        system_id: raw.system_id.clone(),
        samples: hours.into_iter().collect(),
    })
}

/// fraction = min(1, scale·out / population). The individual scale
/// (default 2) converts customer counts to affected people.
pub fn normalize_outages(
    hourly: &HourlySeries,
    population: u64,
    scale: f64,
) -> Result<NormalizedOutageSeries, IngestError> {
    if population == 0 {
        return Err(IngestError::NonPositivePopulation {
            system: hourly.system_id.clone(),
            year: 0,
            population: 0,
        });
    }
    if !(scale > 0.0) {
        return Err(IngestError::BadScale(scale));
    }
    Ok(NormalizedOutageSeries {
        system_id: hourly.system_id.clone(),
        samples: hourly
            .samples
            .iter()
            .map(|&(hour, out)| (hour, (scale * out as f64 / population as f64).min(1.0)))
            .collect(),
    })
}

/// Normalize a whole series, looking the population up per sample year.
pub fn normalize_with_table(
    hourly: &HourlySeries,
    table: &PopulationTable,
    scale: f64,
) -> Result<NormalizedOutageSeries, IngestError> {
    if !(scale > 0.0) {
        return Err(IngestError::BadScale(scale));
    }
    let mut samples = Vec::with_capacity(hourly.samples.len());
    for &(hour, out) in &hourly.samples {
        let population = table.lookup(&hourly.system_id, epoch_hour_year(hour))?;
        samples.push((hour, (scale * out as f64 / population as f64).min(1.0)));
    }
    Ok(NormalizedOutageSeries {
        system_id: hourly.system_id.clone(),
        samples,
    })
}
