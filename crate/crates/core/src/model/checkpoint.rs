//! Float checkpoint layout:
//!
//! ```text
//! 8 bytes   magic "ECGCKPT1"
//! u64 LE    length L of the JSON manifest
//! L bytes   manifest {"config", "tensors": [{name, shape, offset, dtype}], "metadata"}
//! f32 LE values of every tensor, at element offset `offset` from the blob start
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelParams, TensorId};
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ECGCKPT1";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
    dtype: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
    #[serde(default)]
    metadata: serde_json::Value,
}

/// Parameters plus free-form metadata (config hash, seed, training log summary).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub metadata: serde_json::Value,
}

pub fn save_checkpoint(
    path: &Path,
    params: &ModelParams,
    metadata: serde_json::Value,
) -> Result<()> {
    let manifest = Manifest {
        config: params.config().clone(),
        tensors: params
            .layout()
            .iter()
            .map(|s| TensorEntry {
                name: s.id.name().to_string(),
                shape: [s.rows, s.cols],
                offset: s.offset,
                dtype: "f32".into(),
            })
            .collect(),
        metadata,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut bytes = Vec::with_capacity(16 + json.len() + 4 * params.len());
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for &v in params.as_slice() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    std::fs::write(path, bytes)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a float checkpoint".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(16..16 + len)
        .ok_or(Error::Truncated("checkpoint manifest"))?;
    let manifest: Manifest = serde_json::from_slice(json)?;
    let blob = &bytes[16 + len..];
    let mut params = ModelParams::zeros(&manifest.config)?;
    if blob.len() != 4 * params.len() {
        return Err(Error::LengthMismatch {
            expected: 4 * params.len(),
            actual: blob.len(),
        });
    }
    let values: Vec<f64> = blob
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
        .collect();
    for entry in &manifest.tensors {
        let id = TensorId::from_name(&entry.name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown tensor {}", entry.name)))?;
        let spec = params.spec(id);
        if entry.dtype != "f32" || entry.shape != [spec.rows, spec.cols] {
            return Err(Error::Checkpoint(format!(
                "tensor {} has shape {:?} {}",
                entry.name, entry.shape, entry.dtype
            )));
        }
        let src = values
            .get(entry.offset..entry.offset + spec.len())
            .ok_or_else(|| Error::Checkpoint(format!("tensor {} out of range", entry.name)))?;
        params.tensor_mut(id).copy_from_slice(src);
    }
    if manifest.tensors.len() != TensorId::ALL.len() {
        return Err(Error::Checkpoint(format!(
            "{} tensors listed",
            manifest.tensors.len()
        )));
    }
    Ok(Checkpoint {
        params,
        metadata: manifest.metadata,
    })
}
