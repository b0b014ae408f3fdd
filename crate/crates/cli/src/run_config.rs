//! The single JSON document configuring every command.
//!
//! Unknown keys are rejected at any depth and all child-module invariants
//! are checked at load, so a config that loads is a config that runs.

use std::path::Path;

use gridres_eval::PlanMode;
use gridres_ingest::IngestConfig;
use gridres_sim::{SimConfig, TopologyGenConfig};
use gridres_surrogate::SurrogateConfig;
use gridres_core::{VulnerabilityProfile, WeightScheme};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

/// Metric knobs shared by `evaluate` and weighted planning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricSettings {
    /// Weighting strength in the exponent `1 + lambda * S`.
    pub lambda: f64,
    pub scheme: WeightScheme,
}

impl Default for MetricSettings {
    fn default() -> Self {
        Self {
            lambda: VulnerabilityProfile::DEFAULT_LAMBDA,
            scheme: WeightScheme::PlainSum,
        }
    }
}

/// DER sizing defaults; each has a matching `plan` flag override.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlanningSettings {
    /// Watts of DER one pole can host.
    pub pu: f64,
    /// Poles available per system.
    pub np: u64,
    /// Target mean resilience.
    pub target: f64,
    pub mode: PlanMode,
}

impl Default for PlanningSettings {
    fn default() -> Self {
        Self {
            pu: 600.0,
            np: 1000,
            target: 0.9,
            mode: PlanMode::Analytic,
        }
    }
}

/// Split shapes used by `train`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSettings {
    pub folds: usize,
    pub val_fraction: f64,
    pub test_fraction: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            folds: 5,
            val_fraction: 0.2,
            test_fraction: 0.2,
        }
    }
}

/// Hyperparameter grid swept by `train --grid-search`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub learning_rates: Vec<f64>,
    pub weight_decays: Vec<f64>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self {
            learning_rates: vec![0.003, 0.00819, 0.02],
            weight_decays: vec![0.0, 0.00002],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub schema_version: u32,
    pub seed: u64,
    pub workers: usize,
    pub topology: TopologyGenConfig,
    pub sim: SimConfig,
    pub ingest: IngestConfig,
    /// `input_dim` and `n_systems` are rewritten from the dataset at
    /// train time; the other fields are taken as-is.
    pub surrogate: SurrogateConfig,
    pub train: TrainSettings,
    pub search: SearchSpace,
    pub metrics: MetricSettings,
    pub planning: PlanningSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        // Team placement clusters service-area centroids, so the default
        // crew count must not exceed the default area count.
        let mut sim = SimConfig::default();
        sim.recovery.n_teams = TopologyGenConfig::default().n_service_areas;
        Self {
            schema_version: SCHEMA_VERSION,
            seed: 42,
            workers: 1,
            topology: TopologyGenConfig::default(),
            sim,
            ingest: IngestConfig::default(),
            surrogate: SurrogateConfig::case_b(16, 8),
            train: TrainSettings::default(),
            search: SearchSpace::default(),
            metrics: MetricSettings::default(),
            planning: PlanningSettings::default(),
        }
    }
}

impl RunConfig {
    /// Check every section, reporting failures with a field path.
    pub fn validate(&self) -> Result<(), CliError> {
        fn section<E: std::fmt::Display>(name: &'static str) -> impl Fn(E) -> CliError {
            move |e| CliError::config(format!("{name}: {e}"))
        }
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "schema_version: expected {SCHEMA_VERSION}, got {}",
                self.schema_version
            )));
        }
        if self.workers < 1 {
            return Err(CliError::config("workers: must be >= 1"));
        }
        self.topology.validate().map_err(section("topology"))?;
        self.sim
            .validate(self.topology.n_service_areas)
            .map_err(section("sim"))?;
        self.ingest.validate().map_err(section("ingest"))?;
        self.surrogate.validate().map_err(section("surrogate"))?;

        if self.train.folds < 2 {
            return Err(CliError::config("train.folds: must be >= 2"));
        }
        let open_unit = |f: f64| f > 0.0 && f < 1.0;
        if !open_unit(self.train.val_fraction) || !open_unit(self.train.test_fraction) {
            return Err(CliError::config(
                "train.val_fraction/test_fraction: must lie in (0, 1)",
            ));
        }
        if self.train.val_fraction + self.train.test_fraction >= 1.0 {
            return Err(CliError::config(
                "train.val_fraction + train.test_fraction: must sum below 1",
            ));
        }

        if self.search.learning_rates.is_empty() || self.search.weight_decays.is_empty() {
            return Err(CliError::config("search: both grids must be non-empty"));
        }
        if self.search.learning_rates.iter().any(|&lr| !(lr > 0.0)) {
            return Err(CliError::config("search.learning_rates: must all be > 0"));
        }
        if self.search.weight_decays.iter().any(|&wd| wd < 0.0) {
            return Err(CliError::config("search.weight_decays: must all be >= 0"));
        }

        if !(self.metrics.lambda > 0.0 && self.metrics.lambda.is_finite()) {
            return Err(CliError::config(format!(
                "metrics.lambda: must be positive and finite, got {}",
                self.metrics.lambda
            )));
        }
        self.metrics.scheme.validate().map_err(section("metrics.scheme"))?;

        if !(self.planning.pu > 0.0 && self.planning.pu.is_finite()) {
            return Err(CliError::config(format!(
                "planning.pu: must be positive and finite, got {}",
                self.planning.pu
            )));
        }
        if self.planning.np < 1 {
            return Err(CliError::config("planning.np: must be >= 1"));
        }
        if !(self.planning.target > 0.0 && self.planning.target <= 1.0) {
            return Err(CliError::config(format!(
                "planning.target: must lie in (0, 1], got {}",
                self.planning.target
            )));
        }
        Ok(())
    }
}

/// Load the config (or defaults), apply flag overrides, validate.
pub fn load(
    path: Option<&Path>,
    seed: Option<u64>,
    workers: Option<usize>,
) -> Result<RunConfig, CliError> {
    let mut config = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| CliError::new("io", format!("{}: {e}", p.display())))?;
            let mut de = serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize(&mut de)
                .map_err(|e| CliError::config(format!("{}: {e}", p.display())))?
        }
    };
    if let Some(seed) = seed {
        config.seed = seed;
    }
    if let Some(workers) = workers {
        config.workers = workers;
    }
    config.validate()?;
    Ok(config)
}
