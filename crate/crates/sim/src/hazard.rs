//! Thunderstorm wind scenarios: gust schedules, sparse per-area wind
//! samples, patch-constant interpolated fields, and the fixed 16-point
//! per-area weather representation.

use crate::topology::{BoundingBox, GridTopology, SimError};
use gridres_core::{idw_interpolate, kmeans, Point2D, RngStream};
use rand::Rng;
use rand_distr::{Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Length of the per-area wind vector fed to the surrogate.
pub const ANCHORS_PER_AREA: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LogNormalParams {
    /// Mean of log speed (log m/s).
    pub mu: f64,
    /// Standard deviation of log speed; 0 degenerates to the median.
    pub sigma: f64,
}

impl LogNormalParams {
    pub fn median(&self) -> f64 {
        self.mu.exp()
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.sigma == 0.0 {
            return self.median();
        }
        LogNormal::new(self.mu, self.sigma)
            .expect("validated log-normal params")
            .sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WindDistributions {
    pub gust: LogNormalParams,
    pub sustained: LogNormalParams,
}

impl Default for WindDistributions {
    fn default() -> Self {
        // Illustrative fits: gust median ~24.5 m/s, sustained ~8.2 m/s.
        Self {
            gust: LogNormalParams { mu: 3.2, sigma: 0.25 },
            sustained: LogNormalParams { mu: 2.1, sigma: 0.3 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HazardConfig {
    /// Inclusive storm duration range in hours.
    pub storm_hours: (u32, u32),
    /// Inclusive range for the number of gust hours.
    pub gust_count: (u32, u32),
    /// Probability each area joins the gust set.
    pub gust_area_probability: f64,
    pub distributions: WindDistributions,
    pub patch_size_km: f64,
    pub idw_power: f64,
}

impl Default for HazardConfig {
    fn default() -> Self {
        Self {
            storm_hours: (4, 12),
            gust_count: (1, 3),
            gust_area_probability: 0.3,
            distributions: WindDistributions::default(),
            patch_size_km: 1.0,
            idw_power: 2.0,
        }
    }
}

impl HazardConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::BadHazard(m));
        let (slo, shi) = self.storm_hours;
        if slo < 2 || slo > shi {
            return bad(format!(
                "storm_hours range must satisfy 2 <= lo <= hi, got ({slo}, {shi})"
            ));
        }
        let (glo, ghi) = self.gust_count;
        if glo > ghi {
            return bad(format!("gust_count range invalid: ({glo}, {ghi})"));
        }
        if !(0.0..=1.0).contains(&self.gust_area_probability) {
            return bad(format!(
                "gust_area_probability must lie in [0,1], got {}",
                self.gust_area_probability
            ));
        }
        if self.distributions.gust.sigma < 0.0 || self.distributions.sustained.sigma < 0.0 {
            return bad("wind sigma must be >= 0".into());
        }
        if self.distributions.gust.median() <= self.distributions.sustained.median() {
            return bad("gust median must exceed sustained median".into());
        }
        if !(self.patch_size_km > 0.0) {
            return bad(format!("patch_size_km must be > 0, got {}", self.patch_size_km));
        }
        if !(self.idw_power > 0.0) {
            return bad(format!("idw_power must be > 0, got {}", self.idw_power));
        }
        Ok(())
    }
}

/// When and where gusts strike within one storm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GustSchedule {
    pub storm_hours: u32,
    pub gust_hours: BTreeSet<u32>,
    pub gust_areas: BTreeSet<u32>,
}

impl GustSchedule {
    pub fn is_gusty(&self, hour: u32, area: u32) -> bool {
        self.gust_hours.contains(&hour) && self.gust_areas.contains(&area)
    }
}

/// Draw a storm schedule: duration, gust hours, and affected areas. If
/// gusts are scheduled but no area passes the inclusion draw, one area
/// is drawn uniformly so the schedule stays consistent.
pub fn make_schedule(
    config: &HazardConfig,
    n_areas: usize,
    rng: &mut impl Rng,
) -> Result<GustSchedule, SimError> {
    config.validate()?;
    if n_areas == 0 {
        return Err(SimError::BadHazard("need at least one service area".into()));
    }
    let storm_hours = rng.random_range(config.storm_hours.0..=config.storm_hours.1);
    let max_gusts = config.gust_count.1.min(storm_hours);
    let min_gusts = config.gust_count.0.min(max_gusts);
    let n_gusts = rng.random_range(min_gusts..=max_gusts);
    let picked = rand::seq::index::sample(rng, storm_hours as usize, n_gusts as usize);
    let gust_hours: BTreeSet<u32> = picked.iter().map(|h| h as u32).collect();
    let mut gust_areas = BTreeSet::new();
    for area in 0..n_areas as u32 {
        if rng.random_bool(config.gust_area_probability) {
            gust_areas.insert(area);
        }
    }
    if gust_areas.is_empty() && !gust_hours.is_empty() {
        gust_areas.insert(rng.random_range(0..n_areas as u32));
    }
    Ok(GustSchedule { storm_hours, gust_hours, gust_areas })
}

/// One wind sample per service area for a given storm hour, placed at a
/// uniformly drawn member pole. Gusty (hour, area) pairs draw from the
/// gust distribution, everything else from the sustained one.
pub fn sample_sparse_field(
    topology: &GridTopology,
    schedule: &GustSchedule,
    hour: u32,
    dists: &WindDistributions,
    rng: &mut impl Rng,
) -> Vec<(Point2D, f64)> {
    let mut samples = Vec::with_capacity(topology.service_areas.len());
    for area in &topology.service_areas {
        let pick = rng.random_range(0..area.pole_ids.len());
        let location = topology.poles[area.pole_ids[pick].0 as usize].location;
        let speed = if schedule.is_gusty(hour, area.id.0) {
            dists.gust.sample(rng)
        } else {
            dists.sustained.sample(rng)
        };
        samples.push((location, speed));
    }
    samples
}

/// Patch-constant wind field over a bounding box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindField {
    pub origin: Point2D,
    pub patch_size_km: f64,
    pub rows: usize,
    pub cols: usize,
    /// Row-major patch speeds, `values[row * cols + col]`.
    pub values: Vec<f64>,
}

/// Interpolate sparse samples onto patch centers with IDW.
pub fn build_wind_field(
    samples: &[(Point2D, f64)],
    patch_size_km: f64,
    bbox: BoundingBox,
    idw_power: f64,
) -> Result<WindField, SimError> {
    if samples.is_empty() {
        return Err(SimError::BadHazard("wind field needs at least one sample".into()));
    }
    let width = (bbox.max.x - bbox.min.x).max(0.0);
    let height = (bbox.max.y - bbox.min.y).max(0.0);
    let cols = ((width / patch_size_km).ceil() as usize).max(1);
    let rows = ((height / patch_size_km).ceil() as usize).max(1);
    let mut values = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let center = Point2D::new(
                bbox.min.x + (col as f64 + 0.5) * patch_size_km,
                bbox.min.y + (row as f64 + 0.5) * patch_size_km,
            );
            values.push(idw_interpolate(samples, center, idw_power)?);
        }
    }
    Ok(WindField { origin: bbox.min, patch_size_km, rows, cols, values })
}

impl WindField {
    /// Wind speed at a point; queries outside the extent clamp to the
    /// nearest boundary patch.
    pub fn wind_at(&self, point: Point2D) -> f64 {
        let col = ((point.x - self.origin.x) / self.patch_size_km).floor();
        let row = ((point.y - self.origin.y) / self.patch_size_km).floor();
        let col = (col.max(0.0) as usize).min(self.cols - 1);
        let row = (row.max(0.0) as usize).min(self.rows - 1);
        self.values[row * self.cols + col]
    }
}

/// Fixed per-area anchor points: K-Means centroids of the area's line
/// midpoints. Areas with fewer than 16 lines repeat their centroids
/// cyclically so the vector length never varies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaAnchors {
    /// `anchors[area][i]`, exactly [`ANCHORS_PER_AREA`] points per area.
    pub anchors: Vec<Vec<Point2D>>,
}

/// Compute anchors for every area. `stream` seeds the K-Means start per
/// area (stream id offset by area id).
pub fn area_anchors(topology: &GridTopology, stream: RngStream) -> Result<AreaAnchors, SimError> {
    let mut anchors = Vec::with_capacity(topology.service_areas.len());
    for area in &topology.service_areas {
        let pole_set: BTreeSet<u32> = area.pole_ids.iter().map(|p| p.0).collect();
        let midpoints: Vec<Point2D> = topology
            .lines
            .iter()
            .filter(|line| {
                let touches = |r: &crate::topology::NodeRef| match r {
                    crate::topology::NodeRef::Pole(p) => pole_set.contains(&p.0),
                    crate::topology::NodeRef::Substation(s) => s.0 == area.id.0,
                };
                touches(&line.a) || touches(&line.b)
            })
            .map(|line| line.midpoint)
            .collect();
        if midpoints.is_empty() {
            return Err(SimError::BadHazard(format!("area {} has no lines", area.id)));
        }
        let k = ANCHORS_PER_AREA.min(midpoints.len());
        let centroids = kmeans(&midpoints, k, stream.stream(stream.stream_id + area.id.0 as u64))?;
        let padded: Vec<Point2D> = (0..ANCHORS_PER_AREA)
            .map(|i| centroids[i % centroids.len()])
            .collect();
        anchors.push(padded);
    }
    Ok(AreaAnchors { anchors })
}

/// The 16 anchor wind speeds for every (area, storm hour).
/// `result[area][hour][i]` follows the anchors' deterministic order.
pub fn weather_representation(
    fields: &[WindField],
    anchors: &AreaAnchors,
) -> Vec<Vec<Vec<f64>>> {
    anchors
        .anchors
        .iter()
        .map(|area_anchors| {
            fields
                .iter()
                .map(|field| area_anchors.iter().map(|p| field.wind_at(*p)).collect())
                .collect()
        })
        .collect()
}
