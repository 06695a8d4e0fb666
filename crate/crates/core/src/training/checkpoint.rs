use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelShape, PoeModel};

pub const CHECKPOINT_FORMAT: &str = "poe-rec-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: [usize; 2],
    pub file: String,
}

/// `manifest.json` of a checkpoint directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub latent_dim: usize,
    pub hidden: usize,
    pub num_domains: usize,
    pub item_counts: Vec<usize>,
    pub seed: u64,
    pub step: u64,
    /// Dataset domain each model domain was trained on.
    pub domain_ids: Vec<usize>,
    /// True when the single model domain is the concatenation of
    /// `domain_ids`.
    #[serde(default)]
    pub concatenated: bool,
    pub tensors: Vec<TensorEntry>,
}

/// Provenance stored next to the parameters.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct CheckpointMeta {
    pub seed: u64,
    pub step: u64,
    pub domain_ids: Vec<usize>,
    pub concatenated: bool,
}

/// Writes the manifest plus one little-endian `f64` file per tensor.
pub fn save_checkpoint(
    model: &PoeModel,
    dir: &Path,
    meta: &CheckpointMeta,
) -> Result<CheckpointManifest> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let shape = model.shape();
    let mut tensors = Vec::new();
    for (name, (rows, cols), data) in model.tensors() {
        let file = format!("{name}.f64");
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_bytes()).collect();
        let path = dir.join(&file);
        fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        tensors.push(TensorEntry {
            name,
            shape: [rows, cols],
            file,
        });
    }
    let domain_ids = if meta.domain_ids.is_empty() && !meta.concatenated {
        (0..model.num_domains()).collect()
    } else {
        meta.domain_ids.clone()
    };
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        latent_dim: shape.latent,
        hidden: shape.hidden,
        num_domains: model.num_domains(),
        item_counts: shape.item_counts.clone(),
        seed: meta.seed,
        step: meta.step,
        domain_ids,
        concatenated: meta.concatenated,
        tensors,
    };
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n")
        .map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads and validates a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<(PoeModel, CheckpointManifest)> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text)
        .map_err(|e| Error::Checkpoint(format!("corrupt manifest: {e}")))?;
    if manifest.format != CHECKPOINT_FORMAT || manifest.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint {} v{}",
            manifest.format, manifest.version
        )));
    }
    if manifest.item_counts.len() != manifest.num_domains {
        return Err(Error::Checkpoint(format!(
            "manifest declares {} domains but {} item counts",
            manifest.num_domains,
            manifest.item_counts.len()
        )));
    }
    let mut model = PoeModel::zeros(ModelShape::new(
        manifest.item_counts.clone(),
        manifest.hidden,
        manifest.latent_dim,
    ))
    .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let expected = model.tensors().len();
    if manifest.tensors.len() != expected {
        return Err(Error::Checkpoint(format!(
            "manifest declares {} domains ({expected} tensors) but lists {} tensors",
            manifest.num_domains,
            manifest.tensors.len()
        )));
    }
    let layout: Vec<(String, (usize, usize))> = model
        .tensors()
        .into_iter()
        .map(|(name, shape, _)| (name, shape))
        .collect();
    for (index, (name, (rows, cols))) in layout.into_iter().enumerate() {
        let entry = manifest
            .tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| Error::Checkpoint(format!("tensor {name} missing from manifest")))?;
        if entry.shape != [rows, cols] {
            return Err(Error::Checkpoint(format!(
                "tensor {name} has shape {:?}, expected [{rows}, {cols}]",
                entry.shape
            )));
        }
        let path = dir.join(&entry.file);
        let bytes = fs::read(&path).map_err(|e| {
            Error::Checkpoint(format!(
                "tensor {name}: cannot read {}: {e}",
                path.display()
            ))
        })?;
        if bytes.len() != rows * cols * 8 {
            return Err(Error::Checkpoint(format!(
                "tensor {name}: file holds {} bytes, expected {}",
                bytes.len(),
                rows * cols * 8
            )));
        }
        let values: Vec<f64> = bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint(format!(
                "tensor {name} holds non-finite values"
            )));
        }
        model.set_tensor(index, &values)?;
    }
    Ok((model, manifest))
}
