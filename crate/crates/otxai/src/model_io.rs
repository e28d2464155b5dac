//! JSON model files.
//!
//! Weights are stored row-major (`outputs x inputs`) with shortest
//! round-trip float formatting, so save → load → save is byte-identical.
//! The power-iteration cache is not stored.

use std::fs;
use std::path::Path;

use otxai_core::model::{Dense, Layer};
use otxai_core::{LipNet, Tensor};
use serde::{Deserialize, Serialize};

use crate::error::{Error, ModelError, Result};

pub const FORMAT_VERSION: u64 = 1;

/// Provenance written next to the weights.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelMeta {
    pub config_hash: String,
    pub seed: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u64,
    input_dim: usize,
    layers: Vec<LayerRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    meta: Option<ModelMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum LayerRecord {
    SpectralDense {
        inputs: usize,
        outputs: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    PlainDense {
        inputs: usize,
        outputs: usize,
        weight: Vec<f64>,
        bias: Vec<f64>,
    },
    Groupsort2 {
        width: usize,
    },
    Relu {
        width: usize,
    },
}

fn record(layer: &Layer) -> LayerRecord {
    let dense = |d: &Dense| {
        (
            d.inputs(),
            d.outputs(),
            d.weight().data().to_vec(),
            d.bias().data().to_vec(),
        )
    };
    match layer {
        Layer::SpectralDense(d) => {
            let (inputs, outputs, weight, bias) = dense(d);
            LayerRecord::SpectralDense {
                inputs,
                outputs,
                weight,
                bias,
            }
        }
        Layer::PlainDense(d) => {
            let (inputs, outputs, weight, bias) = dense(d);
            LayerRecord::PlainDense {
                inputs,
                outputs,
                weight,
                bias,
            }
        }
        Layer::GroupSort2 { width } => LayerRecord::Groupsort2 { width: *width },
        Layer::Relu { width } => LayerRecord::Relu { width: *width },
    }
}

fn dense_from(
    idx: usize,
    inputs: usize,
    outputs: usize,
    weight: Vec<f64>,
    bias: Vec<f64>,
) -> Result<Dense, ModelError> {
    if weight.len() != inputs * outputs || bias.len() != outputs || inputs == 0 || outputs == 0 {
        return Err(ModelError::Shape(format!(
            "layer {idx}: {outputs}x{inputs} weight with {} entries and {} biases",
            weight.len(),
            bias.len()
        )));
    }
    let w = Tensor::matrix(outputs, inputs, weight).map_err(|e| ModelError::Malformed(format!("layer {idx}: {e}")))?;
    let b = Tensor::vector(bias).map_err(|e| ModelError::Malformed(format!("layer {idx}: {e}")))?;
    Dense::new(w, b).map_err(|e| ModelError::Shape(format!("layer {idx}: {e}")))
}

pub fn to_json(net: &LipNet, meta: Option<&ModelMeta>) -> Result<String> {
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        input_dim: net.input_dim(),
        layers: net.layers().iter().map(record).collect(),
        meta: meta.cloned(),
    };
    let mut s = serde_json::to_string_pretty(&file)?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<(LipNet, Option<ModelMeta>)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
    match value.get("format_version").and_then(serde_json::Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        Some(found) => {
            return Err(ModelError::Version {
                found,
                supported: FORMAT_VERSION,
            }
            .into())
        }
        None => return Err(ModelError::Malformed("missing integer `format_version`".into()).into()),
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| ModelError::Malformed(e.to_string()))?;
    let mut layers = Vec::with_capacity(file.layers.len());
    for (idx, rec) in file.layers.into_iter().enumerate() {
        layers.push(match rec {
            LayerRecord::SpectralDense {
                inputs,
                outputs,
                weight,
                bias,
            } => Layer::SpectralDense(dense_from(idx, inputs, outputs, weight, bias)?),
            LayerRecord::PlainDense {
                inputs,
                outputs,
                weight,
                bias,
            } => Layer::PlainDense(dense_from(idx, inputs, outputs, weight, bias)?),
            LayerRecord::Groupsort2 { width } => Layer::GroupSort2 { width },
            LayerRecord::Relu { width } => Layer::Relu { width },
        });
    }
    let net = LipNet::new(file.input_dim, layers).map_err(|e| ModelError::Shape(e.to_string()))?;
    Ok((net, file.meta))
}

pub fn save(net: &LipNet, meta: Option<&ModelMeta>, path: &Path) -> Result<()> {
    fs::write(path, to_json(net, meta)?).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<(LipNet, Option<ModelMeta>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json(&text)
}
