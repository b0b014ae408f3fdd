//! The surrogate network: a stacked GRU encoder over the weather
//! sequence and an MLP decoder over [final hidden state ‖ system
//! one-hot], ending in a sigmoid so predictions stay inside (0,1).

use crate::config::SurrogateConfig;
use crate::SurrogateError;
use gridres_core::RngStream;
use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;

pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer {
    pub wz: Array2<f64>,
    pub uz: Array2<f64>,
    pub bz: Array1<f64>,
    pub wr: Array2<f64>,
    pub ur: Array2<f64>,
    pub br: Array1<f64>,
    pub wh: Array2<f64>,
    pub uh: Array2<f64>,
    pub bh: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// All trainable parameters, supporting a flat view in a fixed block
/// order for the optimizer, the gradient checker, and checkpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub gru: Vec<GruLayer>,
    pub mlp: Vec<Dense>,
}

/// (name, rows, cols) for every block, in flat order; vectors use cols = 0.
pub(crate) fn block_shapes(config: &SurrogateConfig) -> Vec<(String, usize, usize)> {
    let h = config.gru_hidden;
    let mut shapes = Vec::new();
    for layer in 0..config.gru_layers {
        let d_in = if layer == 0 { config.input_dim } else { h };
        for gate in ["z", "r", "h"] {
            shapes.push((format!("gru.{layer}.w{gate}"), h, d_in));
            shapes.push((format!("gru.{layer}.u{gate}"), h, h));
            shapes.push((format!("gru.{layer}.b{gate}"), h, 0));
        }
    }
    let decoder_in = h + config.n_systems;
    for layer in 0..config.mlp_layers {
        let d_in = if layer == 0 { decoder_in } else { h };
        let d_out = if layer + 1 == config.mlp_layers { 1 } else { h };
        shapes.push((format!("mlp.{layer}.w"), d_out, d_in));
        shapes.push((format!("mlp.{layer}.b"), d_out, 0));
    }
    shapes
}

impl Params {
    /// Weights uniform in ±1/√fan_in, biases zero, drawn in block order.
    pub fn init(config: &SurrogateConfig, stream: RngStream) -> Self {
        let mut rng = stream.rng();
        let mut weight = |rows: usize, cols: usize| {
            let bound = 1.0 / (cols as f64).sqrt();
            Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
        };
        let h = config.gru_hidden;
        let gru = (0..config.gru_layers)
            .map(|layer| {
                let d_in = if layer == 0 { config.input_dim } else { h };
                GruLayer {
                    wz: weight(h, d_in),
                    uz: weight(h, h),
                    bz: Array1::zeros(h),
                    wr: weight(h, d_in),
                    ur: weight(h, h),
                    br: Array1::zeros(h),
                    wh: weight(h, d_in),
                    uh: weight(h, h),
                    bh: Array1::zeros(h),
                }
            })
            .collect();
        let decoder_in = h + config.n_systems;
        let mlp = (0..config.mlp_layers)
            .map(|layer| {
                let d_in = if layer == 0 { decoder_in } else { h };
                let d_out = if layer + 1 == config.mlp_layers { 1 } else { h };
                Dense { w: weight(d_out, d_in), b: Array1::zeros(d_out) }
            })
            .collect();
        Self { gru, mlp }
    }

    pub fn zeros(config: &SurrogateConfig) -> Self {
        let h = config.gru_hidden;
        let gru = (0..config.gru_layers)
            .map(|layer| {
                let d_in = if layer == 0 { config.input_dim } else { h };
                GruLayer {
                    wz: Array2::zeros((h, d_in)),
                    uz: Array2::zeros((h, h)),
                    bz: Array1::zeros(h),
                    wr: Array2::zeros((h, d_in)),
                    ur: Array2::zeros((h, h)),
                    br: Array1::zeros(h),
                    wh: Array2::zeros((h, d_in)),
                    uh: Array2::zeros((h, h)),
                    bh: Array1::zeros(h),
                }
            })
            .collect();
        let decoder_in = h + config.n_systems;
        let mlp = (0..config.mlp_layers)
            .map(|layer| {
                let d_in = if layer == 0 { decoder_in } else { h };
                let d_out = if layer + 1 == config.mlp_layers { 1 } else { h };
                Dense { w: Array2::zeros((d_out, d_in)), b: Array1::zeros(d_out) }
            })
            .collect();
        Self { gru, mlp }
    }

    /// Blocks in flat order as mutable slices. (Matrices are row-major
    /// and freshly constructed, so the slices always exist.)
    pub fn blocks_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.gru.iter_mut().enumerate() {
            for (gate, w, u, b) in [
                ("z", &mut layer.wz, &mut layer.uz, &mut layer.bz),
                ("r", &mut layer.wr, &mut layer.ur, &mut layer.br),
                ("h", &mut layer.wh, &mut layer.uh, &mut layer.bh),
            ] {
                out.push((format!("gru.{i}.w{gate}"), w.as_slice_mut().unwrap()));
                out.push((format!("gru.{i}.u{gate}"), u.as_slice_mut().unwrap()));
                out.push((format!("gru.{i}.b{gate}"), b.as_slice_mut().unwrap()));
            }
        }
        for (i, dense) in self.mlp.iter_mut().enumerate() {
            out.push((format!("mlp.{i}.w"), dense.w.as_slice_mut().unwrap()));
            out.push((format!("mlp.{i}.b"), dense.b.as_slice_mut().unwrap()));
        }
        out
    }

    pub fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.gru.iter().enumerate() {
            for (gate, w, u, b) in [
                ("z", &layer.wz, &layer.uz, &layer.bz),
                ("r", &layer.wr, &layer.ur, &layer.br),
                ("h", &layer.wh, &layer.uh, &layer.bh),
            ] {
                out.push((format!("gru.{i}.w{gate}"), w.as_slice().unwrap()));
                out.push((format!("gru.{i}.u{gate}"), u.as_slice().unwrap()));
                out.push((format!("gru.{i}.b{gate}"), b.as_slice().unwrap()));
            }
        }
        for (i, dense) in self.mlp.iter().enumerate() {
            out.push((format!("mlp.{i}.w"), dense.w.as_slice().unwrap()));
            out.push((format!("mlp.{i}.b"), dense.b.as_slice().unwrap()));
        }
        out
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|(_, s)| s.len()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut flat = Vec::with_capacity(self.n_params());
        for (_, slice) in self.blocks() {
            flat.extend_from_slice(slice);
        }
        flat
    }

    pub fn assign_flat(&mut self, flat: &[f64]) {
        let mut offset = 0;
        for (_, slice) in self.blocks_mut() {
            slice.copy_from_slice(&flat[offset..offset + slice.len()]);
            offset += slice.len();
        }
        debug_assert_eq!(offset, flat.len());
    }

    /// First block containing a non-finite value, if any.
    pub fn first_non_finite(&self) -> Option<String> {
        for (name, slice) in self.blocks() {
            if slice.iter().any(|v| !v.is_finite()) {
                return Some(name);
            }
        }
        None
    }
}

/// Per-feature min/max of the training data; features are squashed to
/// [0,1] before entering the encoder.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn identity(input_dim: usize) -> Self {
        Self { min: vec![0.0; input_dim], max: vec![1.0; input_dim] }
    }

    pub fn fit(sequences: &[&Vec<Vec<f64>>], input_dim: usize) -> Self {
        let mut min = vec![f64::INFINITY; input_dim];
        let mut max = vec![f64::NEG_INFINITY; input_dim];
        for seq in sequences {
            for step in seq.iter() {
                for (j, &v) in step.iter().enumerate() {
                    min[j] = min[j].min(v);
                    max[j] = max[j].max(v);
                }
            }
        }
        for j in 0..input_dim {
            if !min[j].is_finite() || !max[j].is_finite() {
                min[j] = 0.0;
                max[j] = 1.0;
            }
        }
        Self { min, max }
    }

    /// Normalize one timestep; returns how many features fell outside
    /// [0,1] and were clamped. Constant features map to 0.5.
    pub fn apply(&self, raw: &[f64], out: &mut [f64]) -> usize {
        let mut clamped = 0;
        for j in 0..raw.len() {
            let range = self.max[j] - self.min[j];
            let v = if range > 0.0 { (raw[j] - self.min[j]) / range } else { 0.5 };
            if !(0.0..=1.0).contains(&v) {
                clamped += 1;
            }
            out[j] = v.clamp(0.0, 1.0);
        }
        clamped
    }
}

/// Trained model: parameters plus everything needed to reproduce its
/// input pipeline (config, normalization, system vocabulary).
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub config: SurrogateConfig,
    pub params: Params,
    pub norm: NormStats,
    /// System ids in one-hot order.
    pub systems: Vec<String>,
}

impl SurrogateModel {
    pub fn new(config: SurrogateConfig, params: Params, norm: NormStats, systems: Vec<String>) -> Result<Self, SurrogateError> {
        config.validate()?;
        if systems.len() != config.n_systems {
            return Err(SurrogateError::BadConfig(format!(
                "system list length {} != n_systems {}",
                systems.len(),
                config.n_systems
            )));
        }
        Ok(Self { config, params, norm, systems })
    }

    pub fn system_index(&self, system_id: &str) -> Result<usize, SurrogateError> {
        self.systems
            .iter()
            .position(|s| s == system_id)
            .ok_or_else(|| SurrogateError::UnknownSystem(system_id.to_string()))
    }

    /// Normalize a raw sequence with the stored statistics; second value
    /// counts clamped out-of-range features.
    pub fn normalize(&self, sequence: &[Vec<f64>]) -> Result<(Array2<f64>, usize), SurrogateError> {
        let d = self.config.input_dim;
        if sequence.is_empty() {
            return Err(SurrogateError::DimensionMismatch(
                "sequence must have at least one timestep".into(),
            ));
        }
        let mut out = Array2::zeros((sequence.len(), d));
        let mut clamped = 0;
        for (t, step) in sequence.iter().enumerate() {
            if step.len() != d {
                return Err(SurrogateError::DimensionMismatch(format!(
                    "timestep {t} has {} features, expected {d}",
                    step.len()
                )));
            }
            clamped += self.norm.apply(step, out.row_mut(t).as_slice_mut().unwrap());
        }
        Ok((out, clamped))
    }

    /// Deterministic inference on a raw sequence.
    pub fn predict(&self, sequence: &[Vec<f64>], system_id: &str) -> Result<f64, SurrogateError> {
        Ok(self.predict_detailed(sequence, system_id)?.0)
    }

    /// Inference plus the clamped-feature warning count. The sigmoid
    /// output head keeps predictions within [0,1] (saturating in f64),
    /// matching the range of the score being estimated.
    pub fn predict_detailed(
        &self,
        sequence: &[Vec<f64>],
        system_id: &str,
    ) -> Result<(f64, usize), SurrogateError> {
        let system = self.system_index(system_id)?;
        let (normalized, clamped) = self.normalize(sequence)?;
        let embedding = gru_forward(&self.params, &self.config, &normalized)?;
        let onehot = onehot(system, self.config.n_systems);
        let rs_hat = decode(&self.params, &self.config, embedding.view(), onehot.view())?;
        Ok((rs_hat, clamped))
    }
}

pub fn onehot(index: usize, n: usize) -> Array1<f64> {
    let mut v = Array1::zeros(n);
    v[index] = 1.0;
    v
}

/// Run the stacked GRU over a normalized sequence (rows = timesteps) and
/// return the top layer's final hidden state.
///
/// Per layer and step: z = σ(Wz·x + Uz·h + bz), r = σ(Wr·x + Ur·h + br),
/// h̃ = tanh(Wh·x + Uh·(r⊙h) + bh), h ← (1−z)⊙h + z⊙h̃, starting from
/// h = 0.
pub fn gru_forward(
    params: &Params,
    config: &SurrogateConfig,
    sequence: &Array2<f64>,
) -> Result<Array1<f64>, SurrogateError> {
    if sequence.nrows() == 0 {
        return Err(SurrogateError::DimensionMismatch("empty sequence".into()));
    }
    if sequence.ncols() != config.input_dim {
        return Err(SurrogateError::DimensionMismatch(format!(
            "sequence feature dim {} != input_dim {}",
            sequence.ncols(),
            config.input_dim
        )));
    }
    let mut layer_input = sequence.clone();
    let mut hidden = Array1::zeros(config.gru_hidden);
    for layer in &params.gru {
        let mut outputs = Array2::zeros((layer_input.nrows(), config.gru_hidden));
        hidden = Array1::zeros(config.gru_hidden);
        for t in 0..layer_input.nrows() {
            let x = layer_input.row(t);
            hidden = gru_cell(layer, x, &hidden);
            outputs.row_mut(t).assign(&hidden);
        }
        layer_input = outputs;
    }
    Ok(hidden)
}

pub(crate) fn gru_cell(layer: &GruLayer, x: ArrayView1<f64>, h: &Array1<f64>) -> Array1<f64> {
    let z = (layer.wz.dot(&x) + layer.uz.dot(h) + &layer.bz).mapv(sigmoid);
    let r = (layer.wr.dot(&x) + layer.ur.dot(h) + &layer.br).mapv(sigmoid);
    let rh = &r * h;
    let h_tilde = (layer.wh.dot(&x) + layer.uh.dot(&rh) + &layer.bh).mapv(f64::tanh);
    (1.0 - &z) * h + &z * &h_tilde
}

/// MLP decoder on [embedding ‖ one-hot]: ReLU hidden layers, sigmoid
/// scalar output.
pub fn decode(
    params: &Params,
    config: &SurrogateConfig,
    embedding: ArrayView1<f64>,
    system_onehot: ArrayView1<f64>,
) -> Result<f64, SurrogateError> {
    if embedding.len() != config.gru_hidden {
        return Err(SurrogateError::DimensionMismatch(format!(
            "embedding length {} != gru_hidden {}",
            embedding.len(),
            config.gru_hidden
        )));
    }
    if system_onehot.len() != config.n_systems {
        return Err(SurrogateError::DimensionMismatch(format!(
            "one-hot length {} != n_systems {}",
            system_onehot.len(),
            config.n_systems
        )));
    }
    let mut activation: Array1<f64> =
        ndarray::concatenate![ndarray::Axis(0), embedding, system_onehot];
    for (i, dense) in params.mlp.iter().enumerate() {
        let pre = dense.w.dot(&activation) + &dense.b;
        if i + 1 == params.mlp.len() {
            return Ok(sigmoid(pre[0]));
        }
        activation = pre.mapv(|v| v.max(0.0));
    }
    unreachable!("mlp_layers >= 1 guarantees the loop returns");
}
