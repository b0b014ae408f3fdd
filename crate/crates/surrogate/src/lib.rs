//! Sequence-to-score surrogate for grid resilience: a GRU encoder over
//! hourly weather features plus an MLP decoder conditioned on a system
//! one-hot, trained with MAE loss and Adam. Everything is double
//! precision and deterministic under a fixed `RngStream`.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod model;
pub mod split;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use config::SurrogateConfig;
pub use dataset::{load_real_dataset, load_sim_dataset, Dataset, TrainingSample};
pub use model::{decode, gru_forward, NormStats, Params, SurrogateModel};
pub use split::{kfold_split, kfold_train_indices, stratified_split, StratifiedSplit};
pub use train::{evaluate_mae, mae_loss, train, EpochRecord, TrainingRun};

#[derive(Debug, thiserror::Error)]
pub enum SurrogateError {
    #[error("invalid surrogate config: {0}")]
    BadConfig(String),
    #[error("unknown system id {0:?}")]
    UnknownSystem(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("label {label} for system {system} outside [0,1]")]
    BadLabel { system: String, label: f64 },
    #[error("non-finite parameters in block {block} after epoch {epoch}")]
    NonFinite { block: String, epoch: usize },
    #[error("invalid split: {0}")]
    BadSplit(String),
    #[error("csv error: {0}")]
    Csv(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}
