//! Cross-checks the cached-path connectivity queries against a
//! brute-force breadth-first reachability oracle on random topologies.

use gridres_core::RngStream;
use gridres_sim::{
    generate_topology, GridTopology, LineId, NodeRef, TopologyGenConfig,
};
use rand::Rng;
use std::collections::{BTreeSet, VecDeque};

/// Independent reachability: rebuild the graph from scratch, drop broken
/// lines, BFS from every substation, and count customers at reached
/// poles.
fn brute_force_served(topology: &GridTopology, broken: &BTreeSet<LineId>) -> u64 {
    let n_poles = topology.poles.len();
    let n_subs = topology.substations.len();
    let index = |r: &NodeRef| match r {
        NodeRef::Pole(p) => p.0 as usize,
        NodeRef::Substation(s) => n_poles + s.0 as usize,
    };
    let mut adjacency = vec![Vec::new(); n_poles + n_subs];
    for line in &topology.lines {
        if broken.contains(&line.id) {
            continue;
        }
        let a = index(&line.a);
        let b = index(&line.b);
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut reached = vec![false; n_poles + n_subs];
    let mut queue = VecDeque::new();
    for s in 0..n_subs {
        reached[n_poles + s] = true;
        queue.push_back(n_poles + s);
    }
    while let Some(v) = queue.pop_front() {
        for &w in &adjacency[v] {
            if !reached[w] {
                reached[w] = true;
                queue.push_back(w);
            }
        }
    }
    topology
        .buildings
        .iter()
        .filter(|b| reached[b.pole_id.0 as usize])
        .map(|b| b.customers)
        .sum()
}

fn random_config(rng: &mut impl Rng) -> TopologyGenConfig {
    let n_areas = rng.random_range(1..=6);
    // Keep the whole grid at or below 200 poles.
    let max_per_area = (200 / n_areas).min(50);
    let lo = rng.random_range(1..=max_per_area.min(10));
    let hi = rng.random_range(lo..=max_per_area);
    TopologyGenConfig {
        n_service_areas: n_areas,
        poles_per_area: (lo, hi),
        buildings_per_area: (1, 20),
        area_spacing_km: rng.random_range(2.0..6.0),
        mean_customers_per_building: rng.random_range(1.0..60.0),
        tree_cover_distribution: (rng.random_range(0.1..0.8), rng.random_range(0.0..0.2)),
    }
}

#[test]
fn served_and_criticality_match_brute_force() {
    let mut rng = RngStream::new(0xF0CA, 0).rng();
    for case in 0..100 {
        let config = random_config(&mut rng);
        let topology =
            generate_topology(&config, RngStream::new(case as u64, 7)).unwrap();
        assert!(topology.poles.len() <= 200, "case {case} too large");
        let paths = topology.service_paths();

        // A handful of random broken sets of growing size, plus extremes.
        let all_lines: Vec<LineId> = topology.lines.iter().map(|l| l.id).collect();
        let mut broken_sets: Vec<BTreeSet<LineId>> =
            vec![BTreeSet::new(), all_lines.iter().copied().collect()];
        for _ in 0..6 {
            let k = rng.random_range(0..=all_lines.len());
            let mut set = BTreeSet::new();
            while set.len() < k {
                set.insert(all_lines[rng.random_range(0..all_lines.len())]);
            }
            broken_sets.push(set);
        }
        for broken in &broken_sets {
            let fast = paths.customers_served(broken).unwrap();
            let slow = brute_force_served(&topology, broken);
            assert_eq!(fast, slow, "case {case}, |broken|={}", broken.len());
        }

        // Criticality on every line, against the single-line oracle.
        let total = topology.total_customers();
        for &line in &all_lines {
            let fast = paths.line_criticality(line).unwrap();
            let slow = total - brute_force_served(&topology, &BTreeSet::from([line]));
            assert_eq!(fast, slow, "case {case}, line {line}");
        }
    }
}
