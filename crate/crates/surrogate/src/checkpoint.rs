//! Model checkpoints: one JSON document carrying the config, the
//! normalization statistics, the system vocabulary, and every parameter
//! block as base64 of little-endian 64-bit floats. The binary encoding
//! makes save → load → predict bit-identical.

use crate::config::SurrogateConfig;
use crate::model::{block_shapes, NormStats, Params, SurrogateModel};
use crate::SurrogateError;
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct BlockDoc {
    name: String,
    /// [rows] for vectors, [rows, cols] for matrices.
    shape: Vec<usize>,
    data: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointDoc {
    schema_version: u32,
    config: SurrogateConfig,
    systems: Vec<String>,
    norm: NormStats,
    params: Vec<BlockDoc>,
}

fn encode_block(values: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    B64.encode(bytes)
}

fn decode_block(name: &str, data: &str, expect_len: usize) -> Result<Vec<f64>, SurrogateError> {
    let bytes = B64
        .decode(data)
        .map_err(|e| SurrogateError::Checkpoint(format!("block {name}: bad base64: {e}")))?;
    if bytes.len() != expect_len * 8 {
        return Err(SurrogateError::Checkpoint(format!(
            "block {name}: got {} bytes, expected {}",
            bytes.len(),
            expect_len * 8
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn to_json(model: &SurrogateModel) -> Result<String, SurrogateError> {
    let params = model
        .params
        .blocks()
        .into_iter()
        .zip(block_shapes(&model.config))
        .map(|((name, slice), (shape_name, rows, cols))| {
            debug_assert_eq!(name, shape_name);
            BlockDoc {
                name,
                shape: if cols == 0 { vec![rows] } else { vec![rows, cols] },
                data: encode_block(slice),
            }
        })
        .collect();
    let doc = CheckpointDoc {
        schema_version: SCHEMA_VERSION,
        config: model.config.clone(),
        systems: model.systems.clone(),
        norm: model.norm.clone(),
        params,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn from_json(json: &str) -> Result<SurrogateModel, SurrogateError> {
    let doc: CheckpointDoc = serde_json::from_str(json)?;
    if doc.schema_version != SCHEMA_VERSION {
        return Err(SurrogateError::Checkpoint(format!(
            "schema_version {} unsupported (this build reads {SCHEMA_VERSION})",
            doc.schema_version
        )));
    }
    doc.config.validate()?;
    let expected = block_shapes(&doc.config);
    if doc.params.len() != expected.len() {
        return Err(SurrogateError::Checkpoint(format!(
            "{} parameter blocks, expected {}",
            doc.params.len(),
            expected.len()
        )));
    }
    if doc.norm.min.len() != doc.config.input_dim || doc.norm.max.len() != doc.config.input_dim {
        return Err(SurrogateError::Checkpoint(format!(
            "normalization length {}/{} != input_dim {}",
            doc.norm.min.len(),
            doc.norm.max.len(),
            doc.config.input_dim
        )));
    }
    let mut params = Params::zeros(&doc.config);
    {
        let blocks = params.blocks_mut();
        for ((block_doc, (name, rows, cols)), (_, slice)) in
            doc.params.iter().zip(&expected).zip(blocks)
        {
            if block_doc.name != *name {
                return Err(SurrogateError::Checkpoint(format!(
                    "block {:?} out of order, expected {:?}",
                    block_doc.name, name
                )));
            }
            let want_shape =
                if *cols == 0 { vec![*rows] } else { vec![*rows, *cols] };
            if block_doc.shape != want_shape {
                return Err(SurrogateError::Checkpoint(format!(
                    "block {name}: shape {:?}, expected {:?}",
                    block_doc.shape, want_shape
                )));
            }
            let values = decode_block(name, &block_doc.data, slice.len())?;
            slice.copy_from_slice(&values);
        }
    }
    if let Some(block) = params.first_non_finite() {
        return Err(SurrogateError::Checkpoint(format!(
            "block {block} contains non-finite values"
        )));
    }
    SurrogateModel::new(doc.config, params, doc.norm, doc.systems)
}

pub fn save(model: &SurrogateModel, path: &Path) -> Result<(), SurrogateError> {
    let json = to_json(model)?;
    std::fs::write(path, json.as_bytes())?;
    Ok(())
}

pub fn load(path: &Path) -> Result<SurrogateModel, SurrogateError> {
    let json = std::fs::read_to_string(path)?;
    from_json(&json)
}
