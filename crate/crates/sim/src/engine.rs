//! Monte Carlo episode engine. Each episode runs a hazard stage (storm
//! hours with wind-driven failures) followed by a restoration stage
//! (crew repairs until the grid is whole), recording per-area service
//! fractions, resilience scores, and surrogate training samples.
//!
//! Episode `i` draws everything from RNG stream `i` of the run seed, so
//! results are byte-identical for any worker count.

use crate::fragility::{sample_failures, FragilityParams};
use crate::hazard::{
    area_anchors, build_wind_field, make_schedule, sample_sparse_field, weather_representation,
    AreaAnchors, GustSchedule, HazardConfig, WindField, ANCHORS_PER_AREA,
};
use crate::recovery::{
    initial_team_placement, plan_repairs, step_restoration, RecoveryConfig, RestorationState,
};
use crate::topology::{GridTopology, LineId, ServicePaths, SimError};
use gridres_core::{trapezoid_resilience, PerformanceCurve, Point2D, RngStream};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

/// Stream ids above this base are reserved for run-level draws so they
/// can never collide with per-episode streams.
pub const TOPOLOGY_STREAM: u64 = 1 << 62;
pub const PLACEMENT_STREAM: u64 = (1 << 62) + 1;
pub const ANCHOR_STREAM_BASE: u64 = (1 << 62) + 2;

/// Which window the dataset's Rs labels use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WindowMode {
    /// Storm start through storm end.
    #[default]
    Event,
    /// Storm start through full restoration.
    Outage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub hazard: HazardConfig,
    pub fragility: FragilityParams,
    pub recovery: RecoveryConfig,
    pub window_mode: WindowMode,
    /// Keep per-hour wind fields in traces (large; off by default).
    #[serde(default)]
    pub record_fields: bool,
}

impl SimConfig {
    pub fn validate(&self, n_areas: usize) -> Result<(), SimError> {
        self.hazard.validate()?;
        self.fragility.validate()?;
        self.recovery.validate(n_areas)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BrokenLineRecord {
    pub line_id: LineId,
    pub break_hour: u32,
    pub repair_hour: u32,
}

/// Full record of one episode, sufficient for replay and plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub episode_id: u64,
    pub schedule: GustSchedule,
    /// `area_fractions[area][hour]`: served fraction over the whole
    /// timeline (hazard then restoration).
    pub area_fractions: Vec<Vec<f64>>,
    /// `weather[area][storm_hour]`: the 16 anchor speeds.
    pub weather: Vec<Vec<Vec<f64>>>,
    pub broken_lines: Vec<BrokenLineRecord>,
    /// Per-area Rs over the storm window.
    pub rs_event: Vec<f64>,
    /// Per-area Rs through full restoration.
    pub rs_outage: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub wind_fields: Option<Vec<WindField>>,
}

/// One surrogate training sample: a gust-affected area's storm weather
/// and its realized resilience.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSample {
    pub area_id: u32,
    pub episode_id: u64,
    /// Storm-hour sequence of 16 anchor speeds.
    pub weather: Vec<Vec<f64>>,
    pub rs: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SimDataset {
    pub samples: Vec<SimSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSummaryRow {
    pub area_id: u32,
    pub episodes: u64,
    pub gust_samples: u64,
    pub mean_rs_event: f64,
    pub mean_rs_outage: f64,
    /// Means over gust-affected episodes only; `None` when the area was
    /// never in a gust set.
    pub mean_rs_event_gust: Option<f64>,
    pub mean_rs_outage_gust: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSummary {
    pub rows: Vec<AreaSummaryRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloOutput {
    pub traces: Vec<EpisodeTrace>,
    pub dataset: SimDataset,
    pub summary: AreaSummary,
}

/// Run one episode. `placements` are the shared initial team locations;
/// all stochastic draws come from stream `episode_id` of `seed`.
pub fn run_episode(
    topology: &GridTopology,
    paths: &ServicePaths,
    anchors: &AreaAnchors,
    placements: &[Point2D],
    config: &SimConfig,
    episode_id: u64,
    seed: u64,
) -> Result<EpisodeTrace, SimError> {
    let n_areas = topology.service_areas.len();
    let mut rng = RngStream::new(seed, episode_id).rng();
    let schedule = make_schedule(&config.hazard, n_areas, &mut rng)?;
    let bbox = topology.bounding_box();

    let mut broken: BTreeSet<LineId> = BTreeSet::new();
    let mut break_hours: Vec<(LineId, u32)> = Vec::new();
    let mut fractions: Vec<Vec<f64>> = vec![Vec::new(); n_areas];
    let mut fields: Vec<WindField> = Vec::with_capacity(schedule.storm_hours as usize);

    for hour in 0..schedule.storm_hours {
        let samples = sample_sparse_field(
            topology,
            &schedule,
            hour,
            &config.hazard.distributions,
            &mut rng,
        );
        let field =
            build_wind_field(&samples, config.hazard.patch_size_km, bbox, config.hazard.idw_power)?;
        let newly = sample_failures(topology, &field, &broken, &config.fragility, &mut rng);
        for line in newly {
            broken.insert(line);
            break_hours.push((line, hour));
        }
        for (area, fraction) in paths.area_served_fractions(&broken)?.iter().enumerate() {
            fractions[area].push(*fraction);
        }
        fields.push(field);
    }

    let weather = weather_representation(&fields, anchors);

    let damaged: Vec<LineId> = broken.iter().copied().collect();
    let queue = plan_repairs(paths, &damaged)?;
    let mut state = RestorationState::new(placements.to_vec(), queue, schedule.storm_hours - 1);
    let mut repair_hours: BTreeMap<LineId, u32> = BTreeMap::new();
    let termination_bound =
        schedule.storm_hours + damaged.len() as u32 * config.recovery.repair_hours.1 + 8;
    while !state.is_done() {
        let completed = step_restoration(&mut state, topology, &config.recovery, &mut rng);
        for line in completed {
            broken.remove(&line);
            repair_hours.insert(line, state.clock);
        }
        for (area, fraction) in paths.area_served_fractions(&broken)?.iter().enumerate() {
            fractions[area].push(*fraction);
        }
        if state.clock > termination_bound {
            return Err(SimError::BadRecovery(format!(
                "restoration exceeded its termination bound of {termination_bound} hours"
            )));
        }
    }

    let storm = schedule.storm_hours as usize;
    let mut rs_event = Vec::with_capacity(n_areas);
    let mut rs_outage = Vec::with_capacity(n_areas);
    for area in 0..n_areas {
        let event = PerformanceCurve::new(0, fractions[area][..storm].to_vec())?;
        rs_event.push(trapezoid_resilience(&event)?.value());
        let outage = PerformanceCurve::new(0, fractions[area].clone())?;
        rs_outage.push(trapezoid_resilience(&outage)?.value());
    }

    let broken_lines = break_hours
        .into_iter()
        .map(|(line_id, break_hour)| BrokenLineRecord {
            line_id,
            break_hour,
            repair_hour: repair_hours[&line_id],
        })
        .collect();

    Ok(EpisodeTrace {
        episode_id,
        schedule,
        area_fractions: fractions,
        weather,
        broken_lines,
        rs_event,
        rs_outage,
        wind_fields: config.record_fields.then_some(fields),
    })
}

/// Run `n_episodes` episodes with up to `workers` threads and aggregate.
/// `on_progress` receives the running completed-episode count.
pub fn run_monte_carlo(
    topology: &GridTopology,
    config: &SimConfig,
    n_episodes: u64,
    seed: u64,
    workers: usize,
    on_progress: impl Fn(u64) + Sync,
) -> Result<MonteCarloOutput, SimError> {
    let n_areas = topology.service_areas.len();
    config.validate(n_areas)?;
    if n_episodes < 1 {
        return Err(SimError::BadConfig("n_episodes must be >= 1".into()));
    }
    let paths = topology.service_paths();
    let anchors = area_anchors(topology, RngStream::new(seed, ANCHOR_STREAM_BASE))?;
    let placements = initial_team_placement(
        topology,
        config.recovery.n_teams,
        RngStream::new(seed, PLACEMENT_STREAM),
    )?;

    let completed = AtomicU64::new(0);
    let run_one = |episode: u64| -> Result<EpisodeTrace, SimError> {
        let trace =
            run_episode(topology, &paths, &anchors, &placements, config, episode, seed)?;
        on_progress(completed.fetch_add(1, Ordering::Relaxed) + 1);
        Ok(trace)
    };

    let traces: Vec<EpisodeTrace> = if workers <= 1 {
        (0..n_episodes).map(run_one).collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| SimError::ThreadPool(e.to_string()))?;
        pool.install(|| {
            (0..n_episodes)
                .into_par_iter()
                .map(run_one)
                .collect::<Result<Vec<_>, _>>()
        })?
    };

    let dataset = collect_dataset(&traces, config.window_mode);
    let summary = summarize(&traces, n_areas);
    Ok(MonteCarloOutput { traces, dataset, summary })
}

/// Gust-affected (area, episode) pairs become training samples; calm
/// areas are skipped entirely.
fn collect_dataset(traces: &[EpisodeTrace], mode: WindowMode) -> SimDataset {
    let mut samples = Vec::new();
    for trace in traces {
        if trace.schedule.gust_hours.is_empty() {
            continue;
        }
        for &area in &trace.schedule.gust_areas {
            let rs = match mode {
                WindowMode::Event => trace.rs_event[area as usize],
                WindowMode::Outage => trace.rs_outage[area as usize],
            };
            samples.push(SimSample {
                area_id: area,
                episode_id: trace.episode_id,
                weather: trace.weather[area as usize].clone(),
                rs,
            });
        }
    }
    SimDataset { samples }
}

fn summarize(traces: &[EpisodeTrace], n_areas: usize) -> AreaSummary {
    let mut rows = Vec::with_capacity(n_areas);
    for area in 0..n_areas {
        let mut sum_event = 0.0;
        let mut sum_outage = 0.0;
        let mut gust_event = 0.0;
        let mut gust_outage = 0.0;
        let mut gust_samples = 0u64;
        for trace in traces {
            sum_event += trace.rs_event[area];
            sum_outage += trace.rs_outage[area];
            if !trace.schedule.gust_hours.is_empty()
                && trace.schedule.gust_areas.contains(&(area as u32))
            {
                gust_event += trace.rs_event[area];
                gust_outage += trace.rs_outage[area];
                gust_samples += 1;
            }
        }
        let n = traces.len() as f64;
        rows.push(AreaSummaryRow {
            area_id: area as u32,
            episodes: traces.len() as u64,
            gust_samples,
            mean_rs_event: sum_event / n,
            mean_rs_outage: sum_outage / n,
            mean_rs_event_gust: (gust_samples > 0).then(|| gust_event / gust_samples as f64),
            mean_rs_outage_gust: (gust_samples > 0).then(|| gust_outage / gust_samples as f64),
        });
    }
    AreaSummary { rows }
}

impl SimDataset {
    /// Weather rows: `area_id,episode_id,hour,w01..w16`.
    pub fn write_weather_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut writer = csv::Writer::from_path(path)?;
        let mut header = vec!["area_id".to_string(), "episode_id".to_string(), "hour".to_string()];
        header.extend((1..=ANCHORS_PER_AREA).map(|i| format!("w{i:02}")));
        writer.write_record(&header)?;
        for sample in &self.samples {
            for (hour, winds) in sample.weather.iter().enumerate() {
                let mut record = vec![
                    sample.area_id.to_string(),
                    sample.episode_id.to_string(),
                    hour.to_string(),
                ];
                record.extend(winds.iter().map(|v| format!("{v}")));
                writer.write_record(&record)?;
            }
        }
        writer.flush()?;
        Ok(())
    }

    /// Label rows: `area_id,episode_id,rs`.
    pub fn write_labels_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["area_id", "episode_id", "rs"])?;
        for sample in &self.samples {
            writer.write_record([
                sample.area_id.to_string(),
                sample.episode_id.to_string(),
                format!("{}", sample.rs),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }
}

impl AreaSummary {
    pub fn write_csv(&self, path: &Path) -> Result<(), SimError> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record([
            "area_id",
            "episodes",
            "gust_samples",
            "mean_rs_event",
            "mean_rs_outage",
            "mean_rs_event_gust",
            "mean_rs_outage_gust",
        ])?;
        for row in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| format!("{x}")).unwrap_or_default();
            writer.write_record([
                row.area_id.to_string(),
                row.episodes.to_string(),
                row.gust_samples.to_string(),
                format!("{}", row.mean_rs_event),
                format!("{}", row.mean_rs_outage),
                opt(row.mean_rs_event_gust),
                opt(row.mean_rs_outage_gust),
            ])?;
        }
        writer.flush()?;
        Ok(())
    }

    /// Ground-truth export `system_id,rs`: per-area mean Rs over gust
    /// samples (the same population the dataset labels come from).
    /// Areas without gust samples are omitted.
    pub fn write_mean_rs_csv(&self, path: &Path, mode: WindowMode) -> Result<(), SimError> {
        let mut writer = csv::Writer::from_path(path)?;
        writer.write_record(["system_id", "rs"])?;
        for row in &self.rows {
            let mean = match mode {
                WindowMode::Event => row.mean_rs_event_gust,
                WindowMode::Outage => row.mean_rs_outage_gust,
            };
            if let Some(mean) = mean {
                writer.write_record([row.area_id.to_string(), format!("{mean}")])?;
            }
        }
        writer.flush()?;
        Ok(())
    }
}

/// Dump full traces as a JSON array for replay.
pub fn write_traces_json(traces: &[EpisodeTrace], path: &Path) -> Result<(), SimError> {
    let text = serde_json::to_string_pretty(traces)?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_topology, TopologyGenConfig};

    fn test_topology(seed: u64) -> GridTopology {
        let config = TopologyGenConfig {
            n_service_areas: 4,
            poles_per_area: (6, 14),
            buildings_per_area: (5, 12),
            ..TopologyGenConfig::default()
        };
        generate_topology(&config, RngStream::new(seed, 0)).unwrap()
    }

    fn test_config() -> SimConfig {
        SimConfig {
            recovery: RecoveryConfig { n_teams: 3, repair_hours: (2, 4) },
            ..SimConfig::default()
        }
    }

    fn single_line_topology() -> GridTopology {
        let config = TopologyGenConfig {
            n_service_areas: 1,
            poles_per_area: (1, 1),
            buildings_per_area: (1, 1),
            ..TopologyGenConfig::default()
        };
        generate_topology(&config, RngStream::new(99, 0)).unwrap()
    }

    #[test]
    fn calm_fragility_keeps_full_service() {
        let topology = test_topology(1);
        let mut config = test_config();
        config.fragility.p_max = 1e-12;
        config.fragility.c = 0.0;
        let out = run_monte_carlo(&topology, &config, 5, 7, 1, |_| {}).unwrap();
        for trace in &out.traces {
            for area in &trace.area_fractions {
                assert!(area.iter().all(|&f| f == 1.0));
            }
            assert!(trace.rs_event.iter().all(|&r| r == 1.0));
            assert!(trace.rs_outage.iter().all(|&r| r == 1.0));
        }
        for row in &out.summary.rows {
            assert_eq!(row.mean_rs_event, 1.0);
            assert_eq!(row.mean_rs_outage, 1.0);
        }
    }

    #[test]
    fn single_line_hand_trace() {
        let topology = single_line_topology();
        let mut config = test_config();
        // Break with certainty at any wind; storm fixed at 2 hours;
        // repairs take exactly 2 hours; one team.
        config.fragility = FragilityParams { v0: -100.0, p_max: 1.0, ..config.fragility };
        config.hazard.storm_hours = (2, 2);
        config.recovery = RecoveryConfig { n_teams: 1, repair_hours: (2, 2) };
        let paths = topology.service_paths();
        let anchors = area_anchors(&topology, RngStream::new(7, ANCHOR_STREAM_BASE)).unwrap();
        let placements =
            initial_team_placement(&topology, 1, RngStream::new(7, PLACEMENT_STREAM)).unwrap();
        let trace =
            run_episode(&topology, &paths, &anchors, &placements, &config, 0, 7).unwrap();
        // Hour 0: break -> 0. Hour 1: still 0. Restoration hours 2-4:
        // assigned at 2, repaired at 4.
        assert_eq!(trace.area_fractions[0], vec![0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(trace.rs_event[0], 0.0);
        assert!((trace.rs_outage[0] - 0.125).abs() < 1e-12);
        assert_eq!(trace.broken_lines.len(), 1);
        assert_eq!(trace.broken_lines[0].break_hour, 0);
        assert_eq!(trace.broken_lines[0].repair_hour, 4);
    }

    #[test]
    fn fixed_seed_reproduces_trace() {
        let topology = test_topology(2);
        let config = test_config();
        let a = run_monte_carlo(&topology, &config, 3, 11, 1, |_| {}).unwrap();
        let b = run_monte_carlo(&topology, &config, 3, 11, 1, |_| {}).unwrap();
        assert_eq!(a.traces, b.traces);
        let c = run_monte_carlo(&topology, &config, 3, 12, 1, |_| {}).unwrap();
        assert_ne!(a.traces, c.traces);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let topology = test_topology(3);
        let config = test_config();
        let serial = run_monte_carlo(&topology, &config, 12, 21, 1, |_| {}).unwrap();
        let parallel = run_monte_carlo(&topology, &config, 12, 21, 4, |_| {}).unwrap();
        assert_eq!(serial.traces, parallel.traces);
        assert_eq!(serial.dataset, parallel.dataset);
        assert_eq!(serial.summary, parallel.summary);
    }

    #[test]
    fn fractions_monotone_by_stage() {
        let topology = test_topology(4);
        let mut config = test_config();
        // Plenty of wind so failures actually happen.
        config.hazard.distributions.sustained.mu = 3.0;
        config.hazard.distributions.gust.mu = 3.6;
        let out = run_monte_carlo(&topology, &config, 6, 31, 1, |_| {}).unwrap();
        let mut saw_damage = false;
        for trace in &out.traces {
            let storm = trace.schedule.storm_hours as usize;
            saw_damage |= !trace.broken_lines.is_empty();
            for area in &trace.area_fractions {
                for h in 1..storm {
                    assert!(area[h] <= area[h - 1] + 1e-12, "hazard stage increased service");
                }
                for h in storm..area.len() {
                    assert!(area[h] + 1e-12 >= area[h - 1], "restoration decreased service");
                }
                assert_eq!(*area.last().unwrap(), 1.0);
            }
        }
        assert!(saw_damage, "test winds should break lines");
    }

    #[test]
    fn dataset_contains_only_gust_areas() {
        let topology = test_topology(5);
        let config = test_config();
        let out = run_monte_carlo(&topology, &config, 10, 41, 1, |_| {}).unwrap();
        assert!(!out.dataset.samples.is_empty());
        for sample in &out.dataset.samples {
            let trace = &out.traces[sample.episode_id as usize];
            assert!(trace.schedule.gust_areas.contains(&sample.area_id));
            assert_eq!(sample.weather.len(), trace.schedule.storm_hours as usize);
            assert!(sample.weather.iter().all(|h| h.len() == ANCHORS_PER_AREA));
            assert_eq!(sample.rs, trace.rs_event[sample.area_id as usize]);
        }
    }

    #[test]
    fn progress_reports_every_episode() {
        let topology = test_topology(6);
        let config = test_config();
        let seen = std::sync::Mutex::new(Vec::new());
        run_monte_carlo(&topology, &config, 5, 51, 1, |n| seen.lock().unwrap().push(n))
            .unwrap();
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn standard_error_shrinks_with_more_episodes() {
        let topology = test_topology(7);
        let config = test_config();
        let se = |n: u64| {
            let out = run_monte_carlo(&topology, &config, n, 61, 1, |_| {}).unwrap();
            let rs: Vec<f64> = out.traces.iter().map(|t| t.rs_event[0]).collect();
            let mean = rs.iter().sum::<f64>() / rs.len() as f64;
            let var = rs.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>()
                / (rs.len() - 1) as f64;
            (var / rs.len() as f64).sqrt()
        };
        assert!(se(80) < se(20));
    }

    #[test]
    fn csv_writers_produce_expected_shapes() {
        let topology = test_topology(8);
        let config = test_config();
        let out = run_monte_carlo(&topology, &config, 6, 71, 1, |_| {}).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let weather = dir.path().join("weather.csv");
        let labels = dir.path().join("labels.csv");
        let summary = dir.path().join("summary.csv");
        let means = dir.path().join("sim_mean_rs.csv");
        out.dataset.write_weather_csv(&weather).unwrap();
        out.dataset.write_labels_csv(&labels).unwrap();
        out.summary.write_csv(&summary).unwrap();
        out.summary.write_mean_rs_csv(&means, WindowMode::Event).unwrap();

        let weather_text = std::fs::read_to_string(&weather).unwrap();
        let mut lines = weather_text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "area_id,episode_id,hour,w01,w02,w03,w04,w05,w06,w07,w08,w09,w10,w11,w12,w13,w14,w15,w16"
        );
        let expected_rows: usize =
            out.dataset.samples.iter().map(|s| s.weather.len()).sum();
        assert_eq!(lines.count(), expected_rows);

        let labels_text = std::fs::read_to_string(&labels).unwrap();
        assert_eq!(labels_text.lines().count(), out.dataset.samples.len() + 1);
        assert!(labels_text.starts_with("area_id,episode_id,rs"));

        let summary_text = std::fs::read_to_string(&summary).unwrap();
        assert_eq!(summary_text.lines().count(), 4 + 1);

        let means_text = std::fs::read_to_string(&means).unwrap();
        assert!(means_text.starts_with("system_id,rs"));
    }

    #[test]
    fn traces_round_trip_through_json() {
        let topology = test_topology(9);
        let mut config = test_config();
        config.record_fields = true;
        let out = run_monte_carlo(&topology, &config, 2, 81, 1, |_| {}).unwrap();
        assert!(out.traces[0].wind_fields.is_some());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traces.json");
        write_traces_json(&out.traces, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let back: Vec<EpisodeTrace> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, out.traces);
    }
}
