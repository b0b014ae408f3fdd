//! Outage-history ingestion: turns raw 15-minute outage counts into
//! hourly normalized series, extracts sustained outage events, and
//! scores each event with the resilience trapezoid.

pub mod events;
pub mod pipeline;
pub mod series;

pub use events::{extract_events, filter_systems, events_to_scores, OutageEvent, ScoreRow};
pub use pipeline::{run_pipeline, write_scores_csv, IngestConfig, IngestReport};
pub use series::{
    downsample_hourly, normalize_outages, parse_outage_csv, HourlySeries, NormalizedOutageSeries,
    PopulationTable, RawOutageSeries,
};

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{path} line {line}: {message}")]
    Parse { path: String, line: u64, message: String },
    #[error("empty input: {0}")]
    Empty(String),
    #[error("population must be positive, got {population} for system {system} year {year}")]
    NonPositivePopulation { system: String, year: i32, population: i64 },
    #[error("no population for system {system} year {year}")]
    MissingPopulation { system: String, year: i32 },
    #[error("scale must be positive, got {0}")]
    BadScale(f64),
    #[error("invalid ingest settings: {0}")]
    BadConfig(String),
    #[error("metric error: {0}")]
    Metric(#[from] gridres_core::MetricsError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
