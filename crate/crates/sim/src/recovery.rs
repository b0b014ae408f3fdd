//! Crew-based restoration: K-Means initial placement, a static
//! criticality-ordered repair queue, and hourly stepping. Teams are never
//! preempted and travel instantaneously.

use crate::topology::{GridTopology, LineId, ServicePaths, SimError};
use gridres_core::{kmeans, Point2D, RngStream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RecoveryConfig {
    pub n_teams: usize,
    /// Inclusive hours-per-repair range.
    pub repair_hours: (u32, u32),
}

impl Default for RecoveryConfig {
    fn default() -> Self {
        Self { n_teams: 15, repair_hours: (2, 4) }
    }
}

impl RecoveryConfig {
    pub fn validate(&self, n_areas: usize) -> Result<(), SimError> {
        if self.n_teams < 1 {
            return Err(SimError::BadRecovery("n_teams must be >= 1".into()));
        }
        if self.n_teams > n_areas {
            return Err(SimError::BadRecovery(format!(
                "n_teams ({}) exceeds service area count ({n_areas})",
                self.n_teams
            )));
        }
        let (lo, hi) = self.repair_hours;
        if lo < 1 || lo > hi {
            return Err(SimError::BadRecovery(format!(
                "repair_hours range invalid: ({lo}, {hi})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Team {
    pub location: Point2D,
    pub busy_until: u32,
    pub assigned: Option<LineId>,
}

/// Mutable restoration ledger for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct RestorationState {
    pub teams: Vec<Team>,
    pub queue: VecDeque<LineId>,
    pub repaired: Vec<LineId>,
    pub clock: u32,
}

impl RestorationState {
    pub fn new(placements: Vec<Point2D>, queue: Vec<LineId>, clock: u32) -> Self {
        let teams = placements
            .into_iter()
            .map(|location| Team { location, busy_until: 0, assigned: None })
            .collect();
        Self { teams, queue: queue.into(), repaired: Vec::new(), clock }
    }

    pub fn is_done(&self) -> bool {
        self.queue.is_empty() && self.teams.iter().all(|t| t.assigned.is_none())
    }
}

/// Starting team locations: K-Means centroids of the service-area
/// centroids.
pub fn initial_team_placement(
    topology: &GridTopology,
    n_teams: usize,
    stream: RngStream,
) -> Result<Vec<Point2D>, SimError> {
    let centroids: Vec<Point2D> =
        topology.service_areas.iter().map(|a| a.centroid).collect();
    if n_teams < 1 || n_teams > centroids.len() {
        return Err(SimError::BadRecovery(format!(
            "n_teams ({n_teams}) must lie in [1, {}]",
            centroids.len()
        )));
    }
    Ok(kmeans(&centroids, n_teams, stream)?)
}

/// Order damaged lines by criticality on the intact network, most
/// critical first; ties break toward the lower line id.
pub fn plan_repairs(paths: &ServicePaths, damaged: &[LineId]) -> Result<Vec<LineId>, SimError> {
    let mut with_crit: Vec<(u64, LineId)> = damaged
        .iter()
        .map(|&line| Ok((paths.line_criticality(line)?, line)))
        .collect::<Result<_, SimError>>()?;
    with_crit.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(with_crit.into_iter().map(|(_, line)| line).collect())
}

fn line_midpoint(topology: &GridTopology, line: LineId) -> Point2D {
    topology.lines[line.0 as usize].midpoint
}

/// Advance one hour: bump the clock, complete finished repairs, then hand
/// idle teams the head of the queue with a fresh uniform repair duration.
/// Returns the lines completed this hour.
pub fn step_restoration(
    state: &mut RestorationState,
    topology: &GridTopology,
    config: &RecoveryConfig,
    rng: &mut impl Rng,
) -> Vec<LineId> {
    state.clock += 1;
    let mut completed = Vec::new();
    for team in state.teams.iter_mut() {
        if let Some(line) = team.assigned {
            if team.busy_until <= state.clock {
                team.assigned = None;
                state.repaired.push(line);
                completed.push(line);
            }
        }
    }
    for team in state.teams.iter_mut() {
        if team.assigned.is_none() {
            let Some(line) = state.queue.pop_front() else { break };
            let duration = rng.random_range(config.repair_hours.0..=config.repair_hours.1);
            team.assigned = Some(line);
            team.busy_until = state.clock + duration;
            team.location = line_midpoint(topology, line);
        }
    }
    completed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{generate_topology, TopologyGenConfig};
    use std::collections::BTreeSet;

    fn topology(n_areas: usize, seed: u64) -> GridTopology {
        let config = TopologyGenConfig {
            n_service_areas: n_areas,
            poles_per_area: (4, 8),
            buildings_per_area: (3, 6),
            ..TopologyGenConfig::default()
        };
        generate_topology(&config, RngStream::new(seed, 0)).unwrap()
    }

    #[test]
    fn one_team_per_area_sits_on_centroids() {
        let topology = topology(6, 1);
        let placements =
            initial_team_placement(&topology, 6, RngStream::new(1, 9)).unwrap();
        let mut want: Vec<Point2D> =
            topology.service_areas.iter().map(|a| a.centroid).collect();
        want.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        assert_eq!(placements, want);
    }

    #[test]
    fn single_team_sits_at_mean_centroid() {
        let topology = topology(5, 2);
        let placements =
            initial_team_placement(&topology, 1, RngStream::new(2, 9)).unwrap();
        let n = topology.service_areas.len() as f64;
        let mean_x: f64 =
            topology.service_areas.iter().map(|a| a.centroid.x).sum::<f64>() / n;
        let mean_y: f64 =
            topology.service_areas.iter().map(|a| a.centroid.y).sum::<f64>() / n;
        assert!((placements[0].x - mean_x).abs() < 1e-9);
        assert!((placements[0].y - mean_y).abs() < 1e-9);
    }

    #[test]
    fn infeasible_team_count_is_rejected() {
        let topology = topology(3, 3);
        assert!(initial_team_placement(&topology, 4, RngStream::new(3, 9)).is_err());
        assert!(initial_team_placement(&topology, 0, RngStream::new(3, 9)).is_err());
        assert!(RecoveryConfig::default().validate(3).is_err()); // 15 teams, 3 areas
        assert!(RecoveryConfig { n_teams: 3, ..RecoveryConfig::default() }.validate(3).is_ok());
    }

    #[test]
    fn queue_orders_by_criticality_then_id() {
        let topology = topology(2, 4);
        let paths = topology.service_paths();
        let damaged: Vec<LineId> = topology.lines.iter().map(|l| l.id).collect();
        let queue = plan_repairs(&paths, &damaged).unwrap();
        assert_eq!(queue.len(), damaged.len());
        let crit: Vec<u64> = queue
            .iter()
            .map(|&l| paths.line_criticality(l).unwrap())
            .collect();
        for i in 1..queue.len() {
            assert!(
                crit[i - 1] > crit[i] || (crit[i - 1] == crit[i] && queue[i - 1] < queue[i]),
                "order violated at {i}"
            );
        }
    }

    #[test]
    fn single_line_repairs_after_its_duration() {
        let topology = topology(1, 5);
        let config = RecoveryConfig { n_teams: 1, repair_hours: (2, 2) };
        let paths = topology.service_paths();
        let damaged = vec![topology.lines[0].id];
        let queue = plan_repairs(&paths, &damaged).unwrap();
        let placements = initial_team_placement(&topology, 1, RngStream::new(5, 9)).unwrap();
        let mut state = RestorationState::new(placements, queue, 0);
        let mut rng = RngStream::new(5, 1).rng();
        // Hour 1: assignment only.
        let done = step_restoration(&mut state, &topology, &config, &mut rng);
        assert!(done.is_empty());
        assert_eq!(state.teams[0].assigned, Some(damaged[0]));
        assert_eq!(state.teams[0].location, topology.lines[0].midpoint);
        // Hour 2: still busy.
        let done = step_restoration(&mut state, &topology, &config, &mut rng);
        assert!(done.is_empty());
        // Hour 3: repaired exactly two hours after assignment.
        let done = step_restoration(&mut state, &topology, &config, &mut rng);
        assert_eq!(done, damaged);
        assert!(state.is_done());
        assert_eq!(state.clock, 3);
    }

    #[test]
    fn more_damage_than_teams_queues_remainder() {
        let topology = topology(20, 6);
        let paths = topology.service_paths();
        let damaged: Vec<LineId> = topology.lines.iter().take(20).map(|l| l.id).collect();
        let queue = plan_repairs(&paths, &damaged).unwrap();
        let placements = initial_team_placement(&topology, 15, RngStream::new(6, 9)).unwrap();
        let config = RecoveryConfig { n_teams: 15, repair_hours: (2, 4) };
        let mut state = RestorationState::new(placements, queue, 0);
        let mut rng = RngStream::new(6, 1).rng();
        step_restoration(&mut state, &topology, &config, &mut rng);
        let busy = state.teams.iter().filter(|t| t.assigned.is_some()).count();
        assert_eq!(busy, 15);
        assert_eq!(state.queue.len(), 5);
    }

    #[test]
    fn idle_step_only_advances_clock() {
        let topology = topology(2, 7);
        let placements = initial_team_placement(&topology, 2, RngStream::new(7, 9)).unwrap();
        let config = RecoveryConfig { n_teams: 2, repair_hours: (2, 4) };
        let mut state = RestorationState::new(placements, Vec::new(), 5);
        let before = state.clone();
        let done =
            step_restoration(&mut state, &topology, &config, &mut RngStream::new(7, 1).rng());
        assert!(done.is_empty());
        assert_eq!(state.clock, 6);
        assert_eq!(state.teams, before.teams);
        assert!(state.is_done());
    }

    #[test]
    fn restoration_terminates_within_bound() {
        let topology = topology(4, 8);
        let paths = topology.service_paths();
        let damaged: Vec<LineId> = topology.lines.iter().map(|l| l.id).collect();
        let queue = plan_repairs(&paths, &damaged).unwrap();
        let placements = initial_team_placement(&topology, 4, RngStream::new(8, 9)).unwrap();
        let config = RecoveryConfig { n_teams: 4, repair_hours: (2, 4) };
        let mut state = RestorationState::new(placements, queue, 0);
        let mut rng = RngStream::new(8, 1).rng();
        let bound = damaged.len() as u32 * config.repair_hours.1;
        let mut all_done: BTreeSet<LineId> = BTreeSet::new();
        for _ in 0..bound {
            for line in step_restoration(&mut state, &topology, &config, &mut rng) {
                assert!(all_done.insert(line), "line repaired twice");
            }
            if state.is_done() {
                break;
            }
        }
        assert!(state.is_done(), "did not finish within {bound} hours");
        assert_eq!(all_done.len(), damaged.len());
    }
}
