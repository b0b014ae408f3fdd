//! Two-mode line fragility: a logistic wind curve and a clamped-linear
//! tree-contact mode, combined as independent competing failure modes.

use crate::hazard::WindField;
use crate::topology::{GridTopology, LineId, SimError};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FragilityParams {
    /// Logistic midpoint (m/s): wind-only failure reaches p_max/2 here.
    pub v0: f64,
    /// Logistic steepness (1 / (m/s)).
    pub k: f64,
    /// Hourly cap of the wind-only mode.
    pub p_max: f64,
    /// Tree-mode coupling strength.
    pub c: f64,
    /// Tree-mode activation wind speed (m/s).
    pub v_t: f64,
    /// Tree-mode slope past activation (1 / (m/s)).
    pub s: f64,
}

impl Default for FragilityParams {
    fn default() -> Self {
        // Illustrative curve shapes; every knob is config-exposed.
        Self { v0: 30.0, k: 0.3, p_max: 0.2, c: 0.5, v_t: 15.0, s: 0.05 }
    }
}

impl FragilityParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::BadFragility(m));
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return bad(format!("p_max must lie in (0,1], got {}", self.p_max));
        }
        if !(self.k > 0.0) {
            return bad(format!("k must be > 0, got {}", self.k));
        }
        if !(self.s > 0.0) {
            return bad(format!("s must be > 0, got {}", self.s));
        }
        if !(0.0..=1.0).contains(&self.c) {
            return bad(format!("c must lie in [0,1], got {}", self.c));
        }
        Ok(())
    }
}

/// Per-hour failure probability of one line at wind speed `v` (m/s) with
/// the given overhead tree cover fraction.
pub fn hourly_failure_probability(v: f64, tree_cover: f64, params: &FragilityParams) -> f64 {
    let p_wind = params.p_max / (1.0 + (-params.k * (v - params.v0)).exp());
    let p_tree = params.c * tree_cover * (params.s * (v - params.v_t)).clamp(0.0, 1.0);
    1.0 - (1.0 - p_wind) * (1.0 - p_tree)
}

/// Draw this hour's new failures: every intact line flips an independent
/// coin at its midpoint wind speed. Lines are visited in id order so a
/// fixed rng yields a fixed broken set.
pub fn sample_failures(
    topology: &GridTopology,
    field: &WindField,
    broken: &BTreeSet<LineId>,
    params: &FragilityParams,
    rng: &mut impl Rng,
) -> Vec<LineId> {
    let mut newly = Vec::new();
    for line in &topology.lines {
        if broken.contains(&line.id) {
            continue;
        }
        let v = field.wind_at(line.midpoint);
        let p = hourly_failure_probability(v, line.tree_cover, params);
        if rng.random::<f64>() < p {
            newly.push(line.id);
        }
    }
    newly
}
