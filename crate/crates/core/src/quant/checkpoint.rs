//! Quantized checkpoint: magic `ECGQNT01`, u64 LE manifest length, the JSON
//! manifest, then the tensor blob. The manifest holds the model config, all
//! scales, every multiplier/shift pair and nonlinearity constant (as the
//! integer model with its tensors emptied), and one entry per tensor with
//! dtype (`i8` or `i32`, little-endian), shape and byte offset into the blob.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IntModel, QuantizedModel, ScaleTable};
use crate::model::ModelConfig;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"ECGQNT01";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    dtype: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    scales: ScaleTable,
    weight_scales: BTreeMap<String, f64>,
    logit_scale: f64,
    model: IntModel,
    tensors: Vec<TensorEntry>,
    metadata: serde_json::Value,
}

enum Slot<'a> {
    I8(&'a mut Vec<i8>),
    I32(&'a mut Vec<i32>),
}

fn slots(m: &mut IntModel) -> Vec<(&'static str, Vec<usize>, Slot<'_>)> {
    let d = m.dims;
    let (e, s, h) = (d.embed_dim, d.seq_len, d.hidden);
    let head_in = e + d.rr_features;
    vec![
        ("conv_w", vec![d.kernel, e], Slot::I8(&mut m.conv_w)),
        ("embed_bias", vec![s, e], Slot::I32(&mut m.embed_bias)),
        ("ln1_g", vec![e], Slot::I8(&mut m.ln1.gamma)),
        ("ln1_b", vec![e], Slot::I32(&mut m.ln1.beta)),
        ("wq", vec![e, e], Slot::I8(&mut m.q.w)),
        ("bq", vec![e], Slot::I32(&mut m.q.b)),
        ("wk", vec![e, e], Slot::I8(&mut m.k.w)),
        ("bk", vec![e], Slot::I32(&mut m.k.b)),
        ("wv", vec![e, e], Slot::I8(&mut m.v.w)),
        ("bv", vec![e], Slot::I32(&mut m.v.b)),
        ("wo", vec![e, e], Slot::I8(&mut m.attn_out.w)),
        ("bo", vec![e], Slot::I32(&mut m.attn_out.b)),
        ("ln2_g", vec![e], Slot::I8(&mut m.ln2.gamma)),
        ("ln2_b", vec![e], Slot::I32(&mut m.ln2.beta)),
        ("ff1_w", vec![e, h], Slot::I8(&mut m.ff1.w)),
        ("ff1_b", vec![h], Slot::I32(&mut m.ff1.b)),
        ("ff2_w", vec![h, e], Slot::I8(&mut m.ff2.w)),
        ("ff2_b", vec![e], Slot::I32(&mut m.ff2.b)),
        ("ln3_g", vec![e], Slot::I8(&mut m.ln3.gamma)),
        ("ln3_b", vec![e], Slot::I32(&mut m.ln3.beta)),
        ("rr_w", vec![d.rr_features, d.rr_features], Slot::I8(&mut m.rr_w)),
        ("head_w", vec![head_in, d.classes], Slot::I8(&mut m.head_w)),
        ("head_b", vec![d.classes], Slot::I32(&mut m.head_b)),
    ]
}

pub fn save_quantized(path: &Path, model: &QuantizedModel, metadata: serde_json::Value) -> Result<()> {
    let mut skeleton = model.int.clone();
    let mut blob = Vec::new();
    let mut tensors = Vec::new();
    for (name, shape, slot) in slots(&mut skeleton) {
        let offset = blob.len();
        let dtype = match slot {
            Slot::I8(v) => {
                blob.extend(std::mem::take(v).into_iter().map(|x| x as u8));
                "i8"
            }
            Slot::I32(v) => {
                for x in std::mem::take(v) {
                    blob.extend_from_slice(&x.to_le_bytes());
                }
                "i32"
            }
        };
        tensors.push(TensorEntry {
            name: name.to_string(),
            dtype: dtype.to_string(),
            shape,
            offset,
        });
    }
    let manifest = Manifest {
        config: model.config.clone(),
        scales: model.scales.clone(),
        weight_scales: model.weight_scales.clone(),
        logit_scale: model.logit_scale,
        model: skeleton,
        tensors,
        metadata,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    w.write_all(&blob)?;
    w.flush()?;
    Ok(())
}

pub fn load_quantized(path: &Path) -> Result<(QuantizedModel, serde_json::Value)> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("not a quantized checkpoint".into()));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let json = bytes
        .get(16..16usize.saturating_add(len))
        .ok_or(Error::Truncated("quantized manifest"))?;
    let mut manifest: Manifest = serde_json::from_slice(json)?;
    let blob = &bytes[16 + len..];
    let entries: BTreeMap<&str, &TensorEntry> =
        manifest.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
    for (name, shape, slot) in slots(&mut manifest.model) {
        let entry = entries
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if entry.shape != shape {
            return Err(Error::Checkpoint(format!(
                "{name}: shape {:?}, expected {shape:?}",
                entry.shape
            )));
        }
        let n: usize = shape.iter().product();
        let (width, dtype) = match slot {
            Slot::I8(_) => (1, "i8"),
            Slot::I32(_) => (4, "i32"),
        };
        if entry.dtype != dtype {
            return Err(Error::Checkpoint(format!("{name}: dtype {}", entry.dtype)));
        }
        let raw = blob
            .get(entry.offset..entry.offset + n * width)
            .ok_or(Error::Truncated("quantized tensor data"))?;
        match slot {
            Slot::I8(v) => *v = raw.iter().map(|&b| b as i8).collect(),
            Slot::I32(v) => {
                *v = raw
                    .chunks_exact(4)
                    .map(|c| i32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect()
            }
        }
    }
    manifest.model.check()?;
    Ok((
        QuantizedModel {
            config: manifest.config,
            scales: manifest.scales,
            weight_scales: manifest.weight_scales,
            logit_scale: manifest.logit_scale,
            int: manifest.model,
        },
        manifest.metadata,
    ))
}
