//! Procedural radial distribution networks.
//!
//! One substation per service area sits on a jittered grid; poles scatter
//! around it and are wired as the shortest-path tree of a k-nearest
//! neighbour graph, so every pole has a unique path to its substation.
//! Buildings attach to the nearest pole of their area. Connectivity
//! queries exploit the tree structure through cached per-pole path line
//! sets.

use gridres_core::{Point2D, RngStream};
use rand::Rng;
use rand_distr::{Beta, Distribution, LogNormal};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("topology config invalid: {0}")]
    BadConfig(String),
    #[error("unknown line id {0}")]
    UnknownLine(u32),
    #[error("unknown area id {0}")]
    UnknownArea(u32),
    #[error("hazard config invalid: {0}")]
    BadHazard(String),
    #[error("fragility params invalid: {0}")]
    BadFragility(String),
    #[error("recovery config invalid: {0}")]
    BadRecovery(String),
    #[error("metric failure inside simulation: {0}")]
    Metric(#[from] gridres_core::MetricsError),
    #[error("numeric failure inside simulation: {0}")]
    Numeric(#[from] gridres_core::NumericsError),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

macro_rules! id_type {
    ($name:ident) => {
        #[derive(
            Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
        )]
        #[serde(transparent)]
        pub struct $name(pub u32);

        impl std::fmt::Display for $name {
            fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_type!(SubstationId);
id_type!(PoleId);
id_type!(LineId);
id_type!(BuildingId);
id_type!(AreaId);

/// A line endpoint: either the area's substation or a pole.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "snake_case")]
pub enum NodeRef {
    Substation(SubstationId),
    Pole(PoleId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Substation {
    pub id: SubstationId,
    pub location: Point2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pole {
    pub id: PoleId,
    pub location: Point2D,
    pub service_area_id: AreaId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub id: LineId,
    pub a: NodeRef,
    pub b: NodeRef,
    pub midpoint: Point2D,
    pub tree_cover: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Building {
    pub id: BuildingId,
    pub location: Point2D,
    pub customers: u64,
    pub pole_id: PoleId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceArea {
    pub id: AreaId,
    pub pole_ids: Vec<PoleId>,
    pub centroid: Point2D,
}

/// Immutable network snapshot. Per-area line graphs are trees rooted at
/// the substation; areas never interconnect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTopology {
    pub substations: Vec<Substation>,
    pub poles: Vec<Pole>,
    pub lines: Vec<Line>,
    pub buildings: Vec<Building>,
    pub service_areas: Vec<ServiceArea>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min: Point2D,
    pub max: Point2D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TopologyGenConfig {
    pub n_service_areas: usize,
    /// Inclusive range of poles per area.
    pub poles_per_area: (usize, usize),
    /// Inclusive range of buildings per area.
    pub buildings_per_area: (usize, usize),
    pub area_spacing_km: f64,
    pub mean_customers_per_building: f64,
    /// (mean, spread) of per-line tree cover; spread is a standard
    /// deviation and is moment-matched onto a Beta distribution.
    pub tree_cover_distribution: (f64, f64),
}

impl Default for TopologyGenConfig {
    fn default() -> Self {
        Self {
            n_service_areas: 8,
            poles_per_area: (20, 60),
            buildings_per_area: (30, 80),
            area_spacing_km: 4.0,
            mean_customers_per_building: 25.0,
            tree_cover_distribution: (0.35, 0.2),
        }
    }
}

impl TopologyGenConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::BadConfig(m));
        if self.n_service_areas < 1 {
            return bad("n_service_areas must be >= 1".into());
        }
        let (plo, phi) = self.poles_per_area;
        if plo < 1 || plo > phi {
            return bad(format!("poles_per_area range invalid: ({plo}, {phi})"));
        }
        let (blo, bhi) = self.buildings_per_area;
        if blo < 1 || blo > bhi {
            return bad(format!("buildings_per_area range invalid: ({blo}, {bhi})"));
        }
        if !(self.area_spacing_km > 0.0) {
            return bad(format!("area_spacing_km must be > 0, got {}", self.area_spacing_km));
        }
        if !(self.mean_customers_per_building > 0.0) {
            return bad("mean_customers_per_building must be > 0".into());
        }
        let (m, s) = self.tree_cover_distribution;
        if !(0.0..=1.0).contains(&m) || !(m > 0.0 && m < 1.0) {
            return bad(format!("tree cover mean must lie in (0,1), got {m}"));
        }
        if s < 0.0 {
            return bad(format!("tree cover spread must be >= 0, got {s}"));
        }
        Ok(())
    }
}

struct MinHeapEntry {
    dist: f64,
    node: usize,
}

impl PartialEq for MinHeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.dist == other.dist && self.node == other.node
    }
}
impl Eq for MinHeapEntry {}
impl PartialOrd for MinHeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for MinHeapEntry {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // Reversed so BinaryHeap pops the smallest distance first.
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.node.cmp(&self.node))
    }
}

/// Shortest-path tree over the k-nearest-neighbour graph of the nodes,
/// rooted at node 0. Returns `parent[v]` for v >= 1.
fn shortest_path_tree(positions: &[Point2D]) -> Vec<usize> {
    let n = positions.len();
    let k = 5.min(n - 1);
    let mut adjacency: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for i in 0..n {
        let mut neighbours: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        neighbours.sort_by(|&a, &b| {
            positions[i]
                .distance(&positions[a])
                .total_cmp(&positions[i].distance(&positions[b]))
                .then(a.cmp(&b))
        });
        for &j in neighbours.iter().take(k) {
            adjacency[i].insert(j);
            adjacency[j].insert(i);
        }
    }

    // Stitch disconnected components together with their closest pair.
    let mut component = vec![usize::MAX; n];
    loop {
        component.fill(usize::MAX);
        let mut n_components = 0;
        for start in 0..n {
            if component[start] != usize::MAX {
                continue;
            }
            let label = n_components;
            n_components += 1;
            let mut stack = vec![start];
            component[start] = label;
            while let Some(v) = stack.pop() {
                for &w in &adjacency[v] {
                    if component[w] == usize::MAX {
                        component[w] = label;
                        stack.push(w);
                    }
                }
            }
        }
        if n_components == 1 {
            break;
        }
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                if component[i] == component[j] {
                    continue;
                }
                let d = positions[i].distance(&positions[j]);
                if best.is_none() || d < best.unwrap().0 {
                    best = Some((d, i, j));
                }
            }
        }
        let (_, i, j) = best.expect("multiple components imply a crossing pair");
        adjacency[i].insert(j);
        adjacency[j].insert(i);
    }

    // Dijkstra from the substation (node 0).
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut done = vec![false; n];
    let mut heap = std::collections::BinaryHeap::new();
    dist[0] = 0.0;
    heap.push(MinHeapEntry { dist: 0.0, node: 0 });
    while let Some(MinHeapEntry { node, .. }) = heap.pop() {
        if done[node] {
            continue;
        }
        done[node] = true;
        for &next in &adjacency[node] {
            let candidate = dist[node] + positions[node].distance(&positions[next]);
            if candidate < dist[next] {
                dist[next] = candidate;
                parent[next] = node;
                heap.push(MinHeapEntry { dist: candidate, node: next });
            }
        }
    }
    parent
}

fn sample_tree_cover(rng: &mut impl Rng, mean: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        return mean;
    }
    let cap = 0.95 * mean * (1.0 - mean);
    let variance = (spread * spread).min(cap);
    let nu = mean * (1.0 - mean) / variance - 1.0;
    let beta = Beta::new(mean * nu, (1.0 - mean) * nu).expect("moment-matched Beta is valid");
    beta.sample(rng)
}

/// Generate a radial synthetic grid. Identical `(config, stream)` inputs
/// reproduce identical topologies.
pub fn generate_topology(
    config: &TopologyGenConfig,
    stream: RngStream,
) -> Result<GridTopology, SimError> {
    config.validate()?;
    let mut rng = stream.rng();
    let n_areas = config.n_service_areas;
    let spacing = config.area_spacing_km;
    let grid_cols = (n_areas as f64).sqrt().ceil() as usize;

    let (cover_mean, cover_spread) = config.tree_cover_distribution;
    let area_sigma = 0.5f64;
    // Log-normal building "area" whose mean equals mean_customers_per_building.
    let area_mu = config.mean_customers_per_building.ln() - 0.5 * area_sigma * area_sigma;
    let building_area_dist =
        LogNormal::new(area_mu, area_sigma).expect("log-normal params are finite");

    let mut topology = GridTopology {
        substations: Vec::with_capacity(n_areas),
        poles: Vec::new(),
        lines: Vec::new(),
        buildings: Vec::new(),
        service_areas: Vec::with_capacity(n_areas),
    };

    for area_index in 0..n_areas {
        let area_id = AreaId(area_index as u32);
        let col = (area_index % grid_cols) as f64;
        let row = (area_index / grid_cols) as f64;
        let jitter = 0.2 * spacing;
        let center = Point2D::new(
            col * spacing + rng.random_range(-jitter..=jitter),
            row * spacing + rng.random_range(-jitter..=jitter),
        );
        let substation_id = SubstationId(area_index as u32);
        topology.substations.push(Substation { id: substation_id, location: center });

        let n_poles = rng.random_range(config.poles_per_area.0..=config.poles_per_area.1);
        let scatter = 0.4 * spacing;
        let first_pole = topology.poles.len() as u32;
        let mut positions = vec![center];
        for p in 0..n_poles {
            let location = Point2D::new(
                center.x + rng.random_range(-scatter..=scatter),
                center.y + rng.random_range(-scatter..=scatter),
            );
            positions.push(location);
            topology.poles.push(Pole {
                id: PoleId(first_pole + p as u32),
                location,
                service_area_id: area_id,
            });
        }

        let parent = shortest_path_tree(&positions);
        for v in 1..positions.len() {
            let p = parent[v];
            let node = |local: usize| {
                if local == 0 {
                    NodeRef::Substation(substation_id)
                } else {
                    NodeRef::Pole(PoleId(first_pole + (local - 1) as u32))
                }
            };
            let midpoint = Point2D::new(
                0.5 * (positions[v].x + positions[p].x),
                0.5 * (positions[v].y + positions[p].y),
            );
            topology.lines.push(Line {
                id: LineId(topology.lines.len() as u32),
                a: node(p),
                b: node(v),
                midpoint,
                tree_cover: sample_tree_cover(&mut rng, cover_mean, cover_spread),
            });
        }

        let n_buildings =
            rng.random_range(config.buildings_per_area.0..=config.buildings_per_area.1);
        for _ in 0..n_buildings {
            let location = Point2D::new(
                center.x + rng.random_range(-scatter..=scatter),
                center.y + rng.random_range(-scatter..=scatter),
            );
            let area_sample: f64 = building_area_dist.sample(&mut rng);
            let customers = (area_sample.round() as u64).max(1);
            let nearest = (0..n_poles)
                .min_by(|&a, &b| {
                    positions[a + 1]
                        .distance(&location)
                        .total_cmp(&positions[b + 1].distance(&location))
                        .then(a.cmp(&b))
                })
                .expect("area has at least one pole");
            topology.buildings.push(Building {
                id: BuildingId(topology.buildings.len() as u32),
                location,
                customers,
                pole_id: PoleId(first_pole + nearest as u32),
            });
        }

        let pole_ids: Vec<PoleId> =
            (0..n_poles).map(|p| PoleId(first_pole + p as u32)).collect();
        let centroid = {
            let n = pole_ids.len() as f64;
            let (sx, sy) = pole_ids.iter().fold((0.0, 0.0), |(sx, sy), id| {
                let loc = topology.poles[id.0 as usize].location;
                (sx + loc.x, sy + loc.y)
            });
            Point2D::new(sx / n, sy / n)
        };
        topology.service_areas.push(ServiceArea { id: area_id, pole_ids, centroid });
    }

    Ok(topology)
}

impl GridTopology {
    pub fn total_customers(&self) -> u64 {
        self.buildings.iter().map(|b| b.customers).sum()
    }

    pub fn bounding_box(&self) -> BoundingBox {
        let mut min = Point2D::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2D::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut absorb = |p: Point2D| {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        };
        for s in &self.substations {
            absorb(s.location);
        }
        for p in &self.poles {
            absorb(p.location);
        }
        for b in &self.buildings {
            absorb(b.location);
        }
        BoundingBox { min, max }
    }

    pub fn to_json(&self) -> Result<String, SimError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        Ok(serde_json::from_str(text)?)
    }

    /// Build the connectivity cache. Call once; queries are read-only.
    pub fn service_paths(&self) -> ServicePaths {
        ServicePaths::build(self)
    }

    /// Customers with an unbroken path to their substation.
    pub fn customers_served(&self, broken: &BTreeSet<LineId>) -> Result<u64, SimError> {
        self.service_paths().customers_served(broken)
    }

    /// Customers that would lose power if only this line failed.
    pub fn line_criticality(&self, line: LineId) -> Result<u64, SimError> {
        self.service_paths().line_criticality(line)
    }
}

/// Cached per-pole substation paths plus customer tallies. Because each
/// area's graph is a tree, a building loses power exactly when one of
/// its pole's path lines is broken.
#[derive(Debug, Clone)]
pub struct ServicePaths {
    /// Lines on the pole -> substation path, per pole.
    path_lines: Vec<Vec<LineId>>,
    /// Customers attached to each pole.
    pole_customers: Vec<u64>,
    pole_area: Vec<AreaId>,
    n_areas: usize,
    n_lines: usize,
    total_customers: u64,
    area_customers: Vec<u64>,
}

impl ServicePaths {
    pub fn build(topology: &GridTopology) -> Self {
        let n_poles = topology.poles.len();
        // Child-side adjacency: for each pole, the line whose far end is
        // one hop closer to the substation.
        let mut up_line: Vec<Option<(LineId, Option<usize>)>> = vec![None; n_poles];
        let mut adjacency: BTreeMap<usize, Vec<(usize, LineId)>> = BTreeMap::new();
        // Node index: poles as-is; substations offset past poles.
        let node_index = |r: &NodeRef| match r {
            NodeRef::Pole(p) => p.0 as usize,
            NodeRef::Substation(s) => n_poles + s.0 as usize,
        };
        for line in &topology.lines {
            let a = node_index(&line.a);
            let b = node_index(&line.b);
            adjacency.entry(a).or_default().push((b, line.id));
            adjacency.entry(b).or_default().push((a, line.id));
        }
        // BFS down from each substation, recording the uplink of each pole.
        let mut visited = vec![false; n_poles + topology.substations.len()];
        for substation in &topology.substations {
            let root = n_poles + substation.id.0 as usize;
            visited[root] = true;
            let mut queue = std::collections::VecDeque::from([root]);
            while let Some(v) = queue.pop_front() {
                if let Some(neighbours) = adjacency.get(&v) {
                    for &(w, line) in neighbours {
                        if !visited[w] {
                            visited[w] = true;
                            debug_assert!(w < n_poles, "substation adjacency reaches only poles");
                            up_line[w] = Some((line, if v < n_poles { Some(v) } else { None }));
                            queue.push_back(w);
                        }
                    }
                }
            }
        }

        let mut path_lines = vec![Vec::new(); n_poles];
        for pole in 0..n_poles {
            let mut lines = Vec::new();
            let mut cursor = Some(pole);
            while let Some(v) = cursor {
                let (line, next) = up_line[v].expect("every pole reaches its substation");
                lines.push(line);
                cursor = next;
            }
            path_lines[pole] = lines;
        }

        let mut pole_customers = vec![0u64; n_poles];
        for building in &topology.buildings {
            pole_customers[building.pole_id.0 as usize] += building.customers;
        }
        let pole_area: Vec<AreaId> = topology.poles.iter().map(|p| p.service_area_id).collect();
        let n_areas = topology.service_areas.len();
        let mut area_customers = vec![0u64; n_areas];
        for pole in 0..n_poles {
            area_customers[pole_area[pole].0 as usize] += pole_customers[pole];
        }
        Self {
            path_lines,
            pole_customers,
            pole_area,
            n_areas,
            n_lines: topology.lines.len(),
            total_customers: topology.buildings.iter().map(|b| b.customers).sum(),
            area_customers,
        }
    }

    pub fn total_customers(&self) -> u64 {
        self.total_customers
    }

    pub fn area_customers(&self) -> &[u64] {
        &self.area_customers
    }

    fn check_lines(&self, broken: &BTreeSet<LineId>) -> Result<(), SimError> {
        for line in broken {
            if line.0 as usize >= self.n_lines {
                return Err(SimError::UnknownLine(line.0));
            }
        }
        Ok(())
    }

    pub fn customers_served(&self, broken: &BTreeSet<LineId>) -> Result<u64, SimError> {
        self.check_lines(broken)?;
        let mut served = 0;
        for pole in 0..self.path_lines.len() {
            if self.path_lines[pole].iter().all(|l| !broken.contains(l)) {
                served += self.pole_customers[pole];
            }
        }
        Ok(served)
    }

    /// Served customers per service area under the given broken set.
    pub fn area_served(&self, broken: &BTreeSet<LineId>) -> Result<Vec<u64>, SimError> {
        self.check_lines(broken)?;
        let mut served = vec![0u64; self.n_areas];
        for pole in 0..self.path_lines.len() {
            if self.path_lines[pole].iter().all(|l| !broken.contains(l)) {
                served[self.pole_area[pole].0 as usize] += self.pole_customers[pole];
            }
        }
        Ok(served)
    }

    /// Served fraction per area; areas with zero customers report 1.0.
    pub fn area_served_fractions(&self, broken: &BTreeSet<LineId>) -> Result<Vec<f64>, SimError> {
        let served = self.area_served(broken)?;
        Ok(served
            .iter()
            .zip(self.area_customers.iter())
            .map(|(&s, &total)| if total == 0 { 1.0 } else { s as f64 / total as f64 })
            .collect())
    }

    pub fn line_criticality(&self, line: LineId) -> Result<u64, SimError> {
        let broken = BTreeSet::from([line]);
        Ok(self.total_customers - self.customers_served(&broken)?)
    }
}
