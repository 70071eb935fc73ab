//! Single-file weight container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic  "EVHDRW\0\x01"
//! 8       4     manifest length M, u32 little-endian
//! 12      M     manifest, UTF-8 JSON
//! 12+M    ...   tensor data, little-endian f32, row-major
//! ```
//!
//! The manifest holds `format_version`, `direction`, `config`,
//! `config_hash` (hex SHA-256 of the config's canonical JSON) and a
//! `tensors` list of `{name, shape, dtype, offset, length}` with byte offsets
//! relative to the start of the data section. See `docs/weights-format.md`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::model::{Direction, ModelConfig, ModelWeights};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"EVHDRW\0\x01";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: u64,
    pub length: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub direction: Direction,
    pub config_hash: String,
    pub config: ModelConfig,
    pub tensors: Vec<TensorEntry>,
}

pub fn encode_weights(w: &ModelWeights) -> Vec<u8> {
    let mut data = Vec::with_capacity(w.num_params() * 4);
    let mut tensors = Vec::with_capacity(w.tensors().len());
    for (name, t) in w.names().iter().zip(w.tensors()) {
        let offset = data.len() as u64;
        for &v in &t.data {
            data.extend_from_slice(&(v as f32).to_le_bytes());
        }
        tensors.push(TensorEntry {
            name: name.clone(),
            shape: t.shape.to_vec(),
            dtype: "f32".into(),
            offset,
            length: data.len() as u64 - offset,
        });
    }
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        direction: w.direction(),
        config_hash: w.config().hash(),
        config: w.config().clone(),
        tensors,
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serialises");
    let mut out = Vec::with_capacity(12 + json.len() + data.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    out.extend_from_slice(&data);
    out
}

/// Parses only the manifest.
pub fn read_manifest(bytes: &[u8], path: &Path) -> Result<(Manifest, usize)> {
    let bad = |reason: String| NetError::WeightFormat { path: path.to_path_buf(), reason };
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("not a weight file (bad magic)".into()));
    }
    let len = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let json = bytes.get(12..12 + len).ok_or_else(|| bad("truncated manifest".into()))?;
    let manifest: Manifest = serde_json::from_slice(json).map_err(|e| bad(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(bad(format!("unsupported format version {}", manifest.format_version)));
    }
    Ok((manifest, 12 + len))
}

pub fn decode_weights(bytes: &[u8], path: &Path) -> Result<ModelWeights> {
    let bad = |reason: String| NetError::WeightFormat { path: path.to_path_buf(), reason };
    let (manifest, start) = read_manifest(bytes, path)?;
    let hash = manifest.config.hash();
    if hash != manifest.config_hash {
        return Err(NetError::ConfigHashMismatch(format!(
            "{}: manifest says {}, config hashes to {hash}",
            path.display(),
            manifest.config_hash
        )));
    }
    let data = &bytes[start..];
    let mut tensors = Vec::with_capacity(manifest.tensors.len());
    for e in &manifest.tensors {
        if e.dtype != "f32" {
            return Err(bad(format!("{}: unsupported dtype {}", e.name, e.dtype)));
        }
        let shape: [usize; 4] = e
            .shape
            .as_slice()
            .try_into()
            .map_err(|_| bad(format!("{}: expected a rank-4 shape", e.name)))?;
        let count: usize = shape.iter().product();
        if e.length != 4 * count as u64 {
            return Err(bad(format!("{}: {} bytes for {count} values", e.name, e.length)));
        }
        let raw = data
            .get(e.offset as usize..(e.offset + e.length) as usize)
            .ok_or_else(|| bad(format!("{}: data out of bounds", e.name)))?;
        let values = raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        tensors.push((e.name.clone(), Tensor::from_vec(shape, values)));
    }
    ModelWeights::from_parts(manifest.config, manifest.direction, tensors)
        .map_err(|e| bad(format!("tensors do not match the config: {e}")))
}

pub fn save_weights(w: &ModelWeights, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_weights(w)).map_err(|e| NetError::io(path, e))
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<ModelWeights> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(NetError::Core(evhdr_core::Error::NotFound(path.to_path_buf())));
    }
    let bytes = fs::read(path).map_err(|e| NetError::io(path, e))?;
    decode_weights(&bytes, path)
}

/// Rounds every value through `f32`, as a save/load cycle does.
pub fn round_to_f32(w: &mut ModelWeights) {
    for t in w.tensors_mut() {
        t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
    }
}
