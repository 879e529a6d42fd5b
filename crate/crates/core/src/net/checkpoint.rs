//! Directory checkpoints: `manifest.json` plus one little-endian f32 blob
//! per parameter tensor.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numerics::{Param, Tensor};

use super::{NetConfig, NetError, PolicyParams};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct TensorEntry {
    group: u8,
    name: String,
    shape: Vec<usize>,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    #[serde(flatten)]
    config: NetConfig,
    frozen1: bool,
    tensors: Vec<TensorEntry>,
}

pub fn save_checkpoint(params: &PolicyParams<f32>, dir: &Path) -> Result<(), NetError> {
    fs::create_dir_all(dir)?;
    let mut tensors = Vec::new();
    for (g, group) in params.groups().into_iter().enumerate() {
        for p in group {
            let file = format!("{:02}_{}.f32", tensors.len(), p.name);
            let bytes: Vec<u8> = p.value.data().iter().flat_map(|v| v.to_le_bytes()).collect();
            fs::write(dir.join(&file), bytes)?;
            tensors.push(TensorEntry {
                group: g as u8 + 1,
                name: p.name.clone(),
                shape: p.value.shape().to_vec(),
                file,
            });
        }
    }
    let manifest = Manifest {
        format_version: CHECKPOINT_VERSION,
        config: params.config.clone(),
        frozen1: params.frozen1,
        tensors,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| NetError::Checkpoint(e.to_string()))?;
    fs::write(dir.join(MANIFEST), text)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<PolicyParams<f32>, NetError> {
    let text = fs::read_to_string(dir.join(MANIFEST))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| NetError::Checkpoint(format!("bad manifest: {e}")))?;
    if manifest.format_version != CHECKPOINT_VERSION {
        return Err(NetError::Checkpoint(format!(
            "format version {} (this build reads {CHECKPOINT_VERSION})",
            manifest.format_version
        )));
    }
    // The architecture implied by the config fixes every name and shape.
    let mut params = PolicyParams::<f32>::init(manifest.config.clone(), 0)
        .map_err(|e| NetError::Checkpoint(format!("manifest config: {e}")))?;
    let expected: Vec<(u8, String, Vec<usize>)> = params
        .groups()
        .into_iter()
        .enumerate()
        .flat_map(|(g, group)| group.iter().map(move |p| (g as u8 + 1, p.name.clone(), p.value.shape().to_vec())))
        .collect();
    if expected.len() != manifest.tensors.len() {
        return Err(NetError::Checkpoint(format!(
            "{} tensors listed, architecture has {}",
            manifest.tensors.len(),
            expected.len()
        )));
    }
    let mut loaded = Vec::with_capacity(expected.len());
    for (entry, (g, name, shape)) in manifest.tensors.iter().zip(&expected) {
        if entry.group != *g || &entry.name != name || &entry.shape != shape {
            return Err(NetError::Checkpoint(format!(
                "tensor {} {:?} does not match expected {} {:?}",
                entry.name, entry.shape, name, shape
            )));
        }
        if entry.file.contains(['/', '\\']) || entry.file.starts_with('.') {
            return Err(NetError::Checkpoint(format!("suspicious blob name {:?}", entry.file)));
        }
        let bytes = fs::read(dir.join(&entry.file))?;
        let n: usize = shape.iter().product();
        if bytes.len() != 4 * n {
            return Err(NetError::Checkpoint(format!(
                "{}: {} bytes, expected {}",
                entry.file,
                bytes.len(),
                4 * n
            )));
        }
        let data: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        let value = Tensor::new(shape.clone(), data)?;
        if !value.all_finite() {
            return Err(NetError::Checkpoint(format!("{}: non-finite values", entry.file)));
        }
        loaded.push(value);
    }
    let mut it = loaded.into_iter();
    for group in params.groups_mut() {
        for p in group.iter_mut() {
            *p = Param::new(p.name.clone(), it.next().expect("counts checked"));
        }
    }
    params.set_frozen1(manifest.frozen1);
    Ok(params)
}

/// Load and require the stored architecture to equal `expected`.
pub fn load_checkpoint_for(dir: &Path, expected: &NetConfig) -> Result<PolicyParams<f32>, NetError> {
    let params = load_checkpoint(dir)?;
    if &params.config != expected {
        return Err(NetError::Checkpoint(format!(
            "checkpoint built for {:?}, runtime expects {:?}",
            params.config, expected
        )));
    }
    Ok(params)
}
