//! Checkpoint layout (all integers little-endian):
//!
//! ```text
//! magic        8 bytes  "DNDRCKP1"
//! header_len   u64
//! header       header_len bytes of UTF-8 JSON (CheckpointHeader)
//! payload      for each layer: kept weights as f32 (row-major over true
//!              mask bits, or all weights row-major when unmasked), then
//!              the layer's biases as f32
//! ```
//!
//! Masks are not stored; they are rebuilt from `spec` (which carries the
//! mask seed) and checked against the recorded per-layer weight counts.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NetworkParams, Storage};
use crate::connectivity::ArchitectureSpec;
use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 8] = b"DNDRCKP1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntry {
    pub n_out: usize,
    pub n_in: usize,
    pub n_weights: usize,
    pub masked: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub spec: ArchitectureSpec,
    pub init_seed: u64,
    pub epoch: usize,
    pub leaky_slope: f64,
    pub dtype: String,
    pub layers: Vec<LayerEntry>,
}

pub fn save_checkpoint(
    path: &Path,
    params: &NetworkParams<f32>,
    spec: &ArchitectureSpec,
    init_seed: u64,
    epoch: usize,
) -> Result<()> {
    let kept: Vec<Vec<f32>> = params.layers.iter().map(|l| l.kept_weights()).collect();
    let header = CheckpointHeader {
        spec: spec.clone(),
        init_seed,
        epoch,
        leaky_slope: f64::from(params.leaky_slope),
        dtype: "f32-le".into(),
        layers: params
            .layers
            .iter()
            .zip(&kept)
            .map(|(l, w)| LayerEntry {
                n_out: l.n_out(),
                n_in: l.n_in(),
                n_weights: w.len(),
                masked: l.mask.is_some(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(16 + json.len() + 4 * params.trainable_parameters());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (layer, w) in params.layers.iter().zip(&kept) {
        for v in w.iter().chain(layer.bias.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, out).with_path(&tmp)?;
    fs::rename(&tmp, path).with_path(path)
}

pub fn load_checkpoint(path: &Path, storage: Storage) -> Result<(NetworkParams<f32>, CheckpointHeader)> {
    let bytes = fs::read(path).with_path(path)?;
    let bad = |reason: &str| Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    };
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a dendrite checkpoint"));
    }
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = bytes.get(16..16 + header_len).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader = serde_json::from_slice(body)?;
    if header.dtype != "f32-le" {
        return Err(bad("unsupported dtype"));
    }
    let mut params = NetworkParams::<f32>::from_spec(&header.spec, header.init_seed, Storage::Sparse)?;
    params.leaky_slope = header.leaky_slope as f32;
    if params.layers.len() != header.layers.len() {
        return Err(bad("layer count does not match spec"));
    }
    let mut payload = bytes[16 + header_len..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
    for (layer, entry) in params.layers.iter_mut().zip(&header.layers) {
        if layer.weight_values().len() != entry.n_weights || layer.n_out() != entry.n_out {
            return Err(bad("layer shape does not match rebuilt masks"));
        }
        for w in layer.weight_values_mut() {
            *w = payload.next().ok_or_else(|| bad("truncated payload"))?;
        }
        for b in layer.bias.iter_mut() {
            *b = payload.next().ok_or_else(|| bad("truncated payload"))?;
        }
    }
    if payload.next().is_some() || !(bytes.len() - 16 - header_len).is_multiple_of(4) {
        return Err(bad("trailing bytes after payload"));
    }
    let params = match storage {
        Storage::Sparse => params,
        Storage::DenseMasked => params.with_storage(Storage::DenseMasked),
    };
    Ok((params, header))
}
