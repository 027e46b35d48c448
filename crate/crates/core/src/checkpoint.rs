//! JSON checkpoints for trained surrogates.
//!
//! Weights are nested row-major arrays (`weights[layer][out][in]`). Floats are
//! written in shortest round-trip form, so save → restore → save is
//! byte-identical.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::Domain;
use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::pinn::{OutputMode, PinnModel, Trainable};
use crate::swing::SwingParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CheckpointFile {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<Vec<f64>>>,
    biases: Vec<Vec<f64>>,
    normalization: Domain,
    physics: SwingParams,
    trainable: Trainable,
    mode: OutputMode,
}

impl From<&PinnModel> for CheckpointFile {
    fn from(model: &PinnModel) -> Self {
        let mlp = &model.mlp;
        let sizes = mlp.layer_sizes();
        let weights = (0..mlp.n_layers())
            .map(|l| {
                mlp.weights(l)
                    .chunks(sizes[l])
                    .map(<[f64]>::to_vec)
                    .collect()
            })
            .collect();
        let biases = (0..mlp.n_layers()).map(|l| mlp.biases(l).to_vec()).collect();
        Self {
            layer_sizes: sizes.to_vec(),
            weights,
            biases,
            normalization: model.norm,
            physics: model.params,
            trainable: model.trainable,
            mode: model.mode,
        }
    }
}

impl CheckpointFile {
    fn into_model(self) -> Result<PinnModel> {
        let sizes = &self.layer_sizes;
        let bad = |msg: String| Error::Malformed(format!("checkpoint: {msg}"));
        if sizes.len() < 2 {
            return Err(bad("fewer than two layers".into()));
        }
        let n_layers = sizes.len() - 1;
        if self.weights.len() != n_layers || self.biases.len() != n_layers {
            return Err(bad(format!(
                "{} weight and {} bias blocks for {n_layers} layers",
                self.weights.len(),
                self.biases.len()
            )));
        }
        let mut flat = Vec::new();
        for l in 0..n_layers {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            let w = &self.weights[l];
            if w.len() != n_out || w.iter().any(|row| row.len() != n_in) {
                return Err(bad(format!("weight block {l} is not {n_out}x{n_in}")));
            }
            if self.biases[l].len() != n_out {
                return Err(bad(format!("bias block {l} is not of length {n_out}")));
            }
            w.iter().for_each(|row| flat.extend_from_slice(row));
            flat.extend_from_slice(&self.biases[l]);
        }
        let mlp = MlpParams::from_flat(sizes, flat).map_err(|e| bad(e.to_string()))?;
        PinnModel::new(mlp, self.physics, self.trainable, self.normalization, self.mode)
            .map_err(|e| bad(e.to_string()))
    }
}

pub fn to_json(model: &PinnModel) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&CheckpointFile::from(model))?;
    s.push('\n');
    Ok(s)
}

pub fn from_json(text: &str) -> Result<PinnModel> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| Error::Malformed(format!("checkpoint: {e}")))?;
    file.into_model()
}

pub fn save(model: &PinnModel, path: impl AsRef<Path>) -> Result<()> {
    if !model.mlp.as_slice().iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidArgument(
            "refusing to write a non-finite checkpoint".into(),
        ));
    }
    std::fs::write(path, to_json(model)?)?;
    Ok(())
}

pub fn restore(path: impl AsRef<Path>) -> Result<PinnModel> {
    from_json(&std::fs::read_to_string(path)?)
}

/// Restores and checks the architecture against `layer_sizes`.
pub fn restore_as(path: impl AsRef<Path>, layer_sizes: &[usize]) -> Result<PinnModel> {
    let model = restore(path)?;
    if model.mlp.layer_sizes() != layer_sizes {
        return Err(Error::Incompatible(format!(
            "checkpoint has layers {:?}, expected {layer_sizes:?}",
            model.mlp.layer_sizes()
        )));
    }
    Ok(model)
}
