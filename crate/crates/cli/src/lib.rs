//! `gridres`: one binary tying the pipeline together — ingest outages,
//! simulate storms, train the surrogate, rank systems, size DER.
//!
//! Every command is deterministic under a fixed seed: identical inputs
//! produce byte-identical output files regardless of worker count.

pub mod commands;
pub mod run_config;

pub use run_config::{MetricSettings, PlanningSettings, RunConfig, SearchSpace, TrainSettings};

use clap::{Parser, Subcommand, ValueEnum};
use std::fmt;
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "gridres",
    version,
    about = "Power-grid resilience workbench",
    after_help = "Errors print one line `error[<code>]: <reason>` and exit 2."
)]
pub struct Cli {
    /// RunConfig JSON document; built-in defaults apply when omitted.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Override the configured RNG seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the configured worker count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Directory for output files (created if missing).
    #[arg(long, global = true, default_value = ".", value_name = "DIR")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TrainMode {
    /// K-fold cross validation: one checkpoint per fold plus an averaged
    /// loss curve.
    Kfold,
    /// Per-system stratified train/val/test split: one checkpoint plus a
    /// test MAE.
    Stratified,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PlanModeArg {
    /// Closed-form sizing; may nominally push events past a perfect score.
    Analytic,
    /// Saturating sizing solved numerically.
    Capped,
}

impl From<PlanModeArg> for gridres_eval::PlanMode {
    fn from(mode: PlanModeArg) -> Self {
        match mode {
            PlanModeArg::Analytic => gridres_eval::PlanMode::Analytic,
            PlanModeArg::Capped => gridres_eval::PlanMode::Capped,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw outage counts into events and resilience scores.
    Ingest {
        /// Outage CSV: `timestamp_utc,system_id,customers_out`.
        #[arg(long, value_name = "CSV")]
        outages: PathBuf,
        /// Population CSV: `system_id,year,population`.
        #[arg(long, value_name = "CSV")]
        population: PathBuf,
    },
    /// Run the storm Monte Carlo and emit a training dataset.
    Simulate {
        /// Number of episodes.
        #[arg(long, default_value_t = 200)]
        episodes: u64,
        /// Also dump full episode traces as JSON (large).
        #[arg(long)]
        traces: bool,
    },
    /// Train the resilience surrogate.
    Train {
        /// Weather CSV: `area_id,episode_id,hour,w01..` (simulated) or
        /// `system_id,event_id,hour,v01..` (historical).
        #[arg(long, value_name = "CSV")]
        weather: PathBuf,
        /// Labels matching the weather flavor: `area_id,episode_id,rs` or
        /// `system_id,event_id,start_hour,end_hour,rs`.
        #[arg(long, value_name = "CSV")]
        labels: PathBuf,
        #[arg(long, value_enum, default_value_t = TrainMode::Kfold)]
        mode: TrainMode,
        /// Append day-of-year sin/cos columns (historical weather only).
        #[arg(long)]
        embed_time: bool,
        /// Sweep the configured search space (stratified mode only) and
        /// keep the best model by validation MAE.
        #[arg(long)]
        grid_search: bool,
    },
    /// Score every system in a checkpoint against a shared benchmark.
    Evaluate {
        /// Checkpoint JSON written by `train`.
        #[arg(long, value_name = "JSON")]
        checkpoint: PathBuf,
        /// Benchmark weather CSV (either flavor).
        #[arg(long, value_name = "CSV")]
        benchmark: PathBuf,
        /// Vulnerability factors CSV: `system_id,f01..f15`.
        #[arg(long, value_name = "CSV")]
        profiles: PathBuf,
        /// Observed per-system mean scores `system_id,rs`; adds a
        /// simulated-vs-predicted rank correlation to the report.
        #[arg(long, value_name = "CSV")]
        ground_truth: Option<PathBuf>,
    },
    /// Size DER capacity so each system reaches a resilience target.
    Plan {
        /// Evaluation report JSON (uses its per-event predictions)...
        #[arg(long, value_name = "JSON", conflicts_with = "scores")]
        report: Option<PathBuf>,
        /// ...or an ingest scores CSV
        /// `system_id,event_id,start_hour,end_hour,rs`.
        #[arg(long, value_name = "CSV")]
        scores: Option<PathBuf>,
        /// Target mean resilience; defaults to the configured value.
        #[arg(long)]
        target: Option<f64>,
        /// Watts of DER one pole can host.
        #[arg(long)]
        pu: Option<f64>,
        /// Poles available per system.
        #[arg(long)]
        np: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<PlanModeArg>,
        /// Vulnerability factors CSV; adds the weighted-target column.
        #[arg(long, value_name = "CSV")]
        profiles: Option<PathBuf>,
    },
    /// Print the effective configuration as JSON.
    DumpConfig,
}

/// Single-line failure with a machine-parseable reason code.
///
/// Codes: `config` (bad settings or flags), `parse` (malformed input
/// file), `io`, `data` (inconsistent inputs), `model` (checkpoint
/// problems), `sim` (simulation failure), `plan` (infeasible planning),
/// `internal`.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.code, self.message.replace('\n', "; "))
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::new("io", e.to_string())
    }
}

impl From<gridres_sim::SimError> for CliError {
    fn from(e: gridres_sim::SimError) -> Self {
        use gridres_sim::SimError::*;
        let code = match &e {
            BadConfig(_) | BadHazard(_) | BadFragility(_) => "config",
            Io(_) => "io",
            Csv(_) | Json(_) => "parse",
            _ => "sim",
        };
        Self::new(code, e.to_string())
    }
}

impl From<gridres_ingest::IngestError> for CliError {
    fn from(e: gridres_ingest::IngestError) -> Self {
        use gridres_ingest::IngestError::*;
        let code = match &e {
            Parse { .. } | Csv(_) => "parse",
            Io(_) => "io",
            BadConfig(_) | BadScale(_) => "config",
            _ => "data",
        };
        Self::new(code, e.to_string())
    }
}

impl From<gridres_surrogate::SurrogateError> for CliError {
    fn from(e: gridres_surrogate::SurrogateError) -> Self {
        use gridres_surrogate::SurrogateError::*;
        let code = match &e {
            BadConfig(_) | BadSplit(_) => "config",
            Csv(_) | Json(_) => "parse",
            Io(_) => "io",
            Checkpoint(_) | NonFinite { .. } => "model",
            _ => "data",
        };
        Self::new(code, e.to_string())
    }
}

impl From<gridres_eval::EvalError> for CliError {
    fn from(e: gridres_eval::EvalError) -> Self {
        use gridres_eval::EvalError::*;
        match e {
            Surrogate(inner) => inner.into(),
            InfeasibleTarget { .. } => Self::new("plan", e.to_string()),
            BadPlanningInput(_) => Self::new("plan", e.to_string()),
            BadBenchmark { .. } | Csv(_) | Json(_) => Self::new("parse", e.to_string()),
            Io(_) => Self::new("io", e.to_string()),
            Numerics(_) => Self::new("internal", e.to_string()),
            _ => Self::new("data", e.to_string()),
        }
    }
}

impl From<gridres_core::MetricsError> for CliError {
    fn from(e: gridres_core::MetricsError) -> Self {
        use gridres_core::MetricsError::*;
        let code = match &e {
            BadProfileRow { .. } | Csv(_) => "parse",
            _ => "data",
        };
        Self::new(code, e.to_string())
    }
}

/// Dispatch a parsed command line. The caller prints the error and picks
/// the exit code.
pub fn run(cli: Cli) -> Result<(), CliError> {
    let config = run_config::load(cli.config.as_deref(), cli.seed, cli.workers)?;
    if !matches!(cli.command, Command::DumpConfig) {
        std::fs::create_dir_all(&cli.out)?;
    }
    match cli.command {
        Command::Ingest { outages, population } => {
            commands::ingest(&config, &outages, &population, &cli.out)
        }
        Command::Simulate { episodes, traces } => {
            commands::simulate(&config, episodes, traces, &cli.out)
        }
        Command::Train { weather, labels, mode, embed_time, grid_search } => {
            commands::train(&config, &weather, &labels, mode, embed_time, grid_search, &cli.out)
        }
        Command::Evaluate { checkpoint, benchmark, profiles, ground_truth } => commands::evaluate(
            &config,
            &checkpoint,
            &benchmark,
            &profiles,
            ground_truth.as_deref(),
            &cli.out,
        ),
        Command::Plan { report, scores, target, pu, np, mode, profiles } => commands::plan(
            &config,
            report.as_deref(),
            scores.as_deref(),
            target,
            pu,
            np,
            mode.map(Into::into),
            profiles.as_deref(),
            &cli.out,
        ),
        Command::DumpConfig => commands::dump_config(&config),
    }
}
