//! Surrogate hyperparameters with the two reference presets used
//! throughout the workbench: a wide single-layer recurrent encoder
//! (case A) and a narrow stacked one (case B).

use crate::SurrogateError;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurrogateConfig {
    pub gru_hidden: usize,
    pub gru_layers: usize,
    /// Total MLP layers including the output layer; hidden layers share
    /// the GRU width.
    pub mlp_layers: usize,
    /// Dropout on GRU outputs between stacked layers.
    pub gru_dropout: f64,
    /// Dropout on MLP hidden activations.
    pub mlp_dropout: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Features per timestep (after any time-embedding columns).
    pub input_dim: usize,
    /// One-hot width of the system embedding.
    pub n_systems: usize,
}

impl SurrogateConfig {
    /// Wide shallow preset: hidden 128, one recurrent layer, two MLP
    /// layers, lr 0.00623, weight decay 0.00058, 500 epochs.
    pub fn case_a(input_dim: usize, n_systems: usize) -> Self {
        Self {
            gru_hidden: 128,
            gru_layers: 1,
            mlp_layers: 2,
            gru_dropout: 0.0,
            mlp_dropout: 0.2,
            learning_rate: 0.00623,
            weight_decay: 0.00058,
            epochs: 500,
            batch_size: 32,
            input_dim,
            n_systems,
        }
    }

    /// Narrow deep preset: hidden 16, four recurrent layers, three MLP
    /// layers, lr 0.00819, weight decay 0.00002, 200 epochs.
    pub fn case_b(input_dim: usize, n_systems: usize) -> Self {
        Self {
            gru_hidden: 16,
            gru_layers: 4,
            mlp_layers: 3,
            gru_dropout: 0.0,
            mlp_dropout: 0.2,
            learning_rate: 0.00819,
            weight_decay: 0.00002,
            epochs: 200,
            batch_size: 32,
            input_dim,
            n_systems,
        }
    }

    pub fn validate(&self) -> Result<(), SurrogateError> {
        let bad = |m: String| Err(SurrogateError::BadConfig(m));
        if self.gru_hidden < 1 || self.gru_layers < 1 || self.mlp_layers < 1 {
            return bad("gru_hidden, gru_layers, and mlp_layers must all be >= 1".into());
        }
        if self.input_dim < 1 {
            return bad("input_dim must be >= 1".into());
        }
        if self.n_systems < 1 {
            return bad("n_systems must be >= 1".into());
        }
        for (name, p) in [("gru_dropout", self.gru_dropout), ("mlp_dropout", self.mlp_dropout)] {
            if !(0.0..=0.8).contains(&p) {
                return bad(format!("{name} must lie in [0, 0.8], got {p}"));
            }
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate must be > 0, got {}", self.learning_rate));
        }
        if self.weight_decay < 0.0 {
            return bad(format!("weight_decay must be >= 0, got {}", self.weight_decay));
        }
        if self.epochs < 1 {
            return bad("epochs must be >= 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch_size must be >= 1".into());
        }
        Ok(())
    }
}
