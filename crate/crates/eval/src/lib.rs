//! Benchmark evaluation, system ranking, and DER sizing.
//!
//! Ties the trained surrogate back to decisions: score every system against a
//! shared benchmark of hazard events, rank by unweighted and vulnerability-
//! weighted resilience, and size the distributed-energy-resource (DER)
//! capacity needed to lift a system to a target score.

pub mod benchmark;
pub mod planning;
pub mod report;

pub use benchmark::{evaluate_benchmark, BenchmarkEvaluation, BenchmarkEvent, BenchmarkSet, SystemEvaluation};
pub use planning::{plan_der_unweighted, plan_der_weighted, PlanMode, PlanResult, PlanningInput};
pub use report::{rank_systems, write_report_csv, write_report_json, ReportRow, ResilienceReport};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("benchmark file {path}: line {line}: {message}")]
    BadBenchmark {
        path: String,
        line: usize,
        message: String,
    },
    #[error("benchmark is empty")]
    EmptyBenchmark,
    #[error("no systems requested for evaluation")]
    NoSystems,
    #[error("no vulnerability profile for system {0:?}")]
    MissingProfile(String),
    #[error("planning input: {0}")]
    BadPlanningInput(String),
    #[error("target {target} unreachable: even full DER backup only reaches {achievable}")]
    InfeasibleTarget { target: f64, achievable: f64 },
    #[error(transparent)]
    Surrogate(#[from] gridres_surrogate::SurrogateError),
    #[error(transparent)]
    Metrics(#[from] gridres_core::MetricsError),
    #[error(transparent)]
    Numerics(#[from] gridres_core::NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
