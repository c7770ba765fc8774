//! Checkpoint directories: `manifest.json` plus `weights.bin`
//! (little-endian `f32`, entries concatenated in manifest order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::graph::{build_model, Network};
use crate::model::params::ParamStore;
use crate::real::Real;

pub const MANIFEST: &str = "manifest.json";
pub const WEIGHTS: &str = "weights.bin";
const FORMAT: &str = "fibnet-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub trainable: bool,
}

/// Training-state scalars stored beside the weights.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingState {
    pub epoch: usize,
    pub optimizer_steps: u64,
    pub val_accuracy: f64,
    pub val_loss: f64,
    pub seed: u64,
    /// Class names in label order, when known.
    #[serde(default)]
    pub classes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub config: ModelConfig,
    pub state: TrainingState,
    pub tensors: Vec<TensorRecord>,
}

/// Writes a checkpoint atomically: everything goes to a sibling temporary
/// directory that is renamed into place only when complete.
pub fn save_checkpoint<T: Real>(
    dir: &Path,
    config: &ModelConfig,
    params: &ParamStore<T>,
    state: &TrainingState,
) -> Result<()> {
    let mut tensors = Vec::with_capacity(params.len());
    let mut bytes = Vec::with_capacity(4 * (params.trainable_count() + params.non_trainable_count()));
    for e in params.entries() {
        tensors.push(TensorRecord {
            name: e.name.clone(),
            shape: e.shape.clone(),
            dtype: "f32".into(),
            offset: bytes.len() as u64,
            trainable: e.trainable,
        });
        for v in &e.values {
            bytes.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    let manifest = Manifest {
        format: FORMAT.into(),
        config: config.clone(),
        state: state.clone(),
        tensors,
    };

    let name = dir
        .file_name()
        .ok_or_else(|| Error::Checkpoint(format!("invalid checkpoint path {}", dir.display())))?;
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let staging = parent.join(format!(".{}.partial", name.to_string_lossy()));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    let manifest_path = staging.join(MANIFEST);
    fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)
        .map_err(|e| Error::io(&manifest_path, e))?;
    let weights_path = staging.join(WEIGHTS);
    fs::write(&weights_path, &bytes).map_err(|e| Error::io(&weights_path, e))?;
    if dir.exists() {
        fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    let path = dir.join(MANIFEST);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT {
        return Err(Error::Checkpoint(format!("unsupported format `{}`", manifest.format)));
    }
    Ok(manifest)
}

/// Loads a checkpoint, verifying every stored tensor against a freshly
/// built graph for the stored configuration.
pub fn load_checkpoint(dir: &Path) -> Result<(Network, ParamStore<f32>, Manifest)> {
    let manifest = read_manifest(dir)?;
    let (net, mut params) = build_model::<f32>(&manifest.config, 0)?;
    if manifest.tensors.len() != params.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, model has {}",
            manifest.tensors.len(),
            params.len()
        )));
    }
    let path = dir.join(WEIGHTS);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    for (rec, entry) in manifest.tensors.iter().zip(params.entries_mut()) {
        if rec.name != entry.name || rec.shape != entry.shape || rec.trainable != entry.trainable {
            return Err(Error::Checkpoint(format!(
                "tensor `{}` {:?} does not match model entry `{}` {:?}",
                rec.name, rec.shape, entry.name, entry.shape
            )));
        }
        if rec.dtype != "f32" {
            return Err(Error::Checkpoint(format!("tensor `{}` has dtype {}", rec.name, rec.dtype)));
        }
        let start = rec.offset as usize;
        let end = start + 4 * entry.values.len();
        let raw = bytes
            .get(start..end)
            .ok_or_else(|| Error::Checkpoint(format!("weights.bin too short for `{}`", rec.name)))?;
        for (v, chunk) in entry.values.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
        }
    }
    let expected_len: usize = params.entries().iter().map(|e| 4 * e.len()).sum();
    if bytes.len() != expected_len {
        return Err(Error::Checkpoint(format!(
            "weights.bin has {} bytes, expected {expected_len}",
            bytes.len()
        )));
    }
    Ok((net, params, manifest))
}
