use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::ModelConfig;
use super::params::{Layout, ParamSet};
use super::ModelError;
use crate::tokenizer::Vocab;

const FORMAT_VERSION: u32 = 1;
const PARAMS_FILE: &str = "params.bin";
const VOCAB_FILE: &str = "vocab.json";
const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Element offset into the blob.
    offset: usize,
    len: usize,
    sha256: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: u32,
    config: ModelConfig,
    vocab_file: String,
    params_file: String,
    tensors: Vec<TensorEntry>,
    blob_sha256: String,
}

/// A loaded model: config, parameters, and the vocabulary it was trained
/// with.
pub struct CheckpointBundle {
    pub config: ModelConfig,
    pub params: ParamSet<f32>,
    pub vocab: Vocab,
}

/// Writes a checkpoint directory: `manifest.json` (config, vocab reference,
/// tensor index with checksums) plus `params.bin`, one blob of little-endian
/// f32 values, row-major, concatenated in layout order.
pub fn save_checkpoint(
    params: &ParamSet<f32>,
    cfg: &ModelConfig,
    vocab: &Vocab,
    dir: &Path,
) -> Result<(), ModelError> {
    fs::create_dir_all(dir)?;
    let mut blob = Vec::with_capacity(params.data.len() * 4);
    for v in &params.data {
        blob.extend_from_slice(&v.to_le_bytes());
    }
    let tensors: Vec<TensorEntry> = params
        .layout
        .specs()
        .iter()
        .map(|spec| TensorEntry {
            name: spec.name.clone(),
            shape: spec.shape.clone(),
            offset: spec.offset,
            len: spec.len(),
            sha256: hex_sha256(&blob[spec.offset * 4..(spec.offset + spec.len()) * 4]),
        })
        .collect();
    let manifest = Manifest {
        format_version: FORMAT_VERSION,
        config: cfg.clone(),
        vocab_file: VOCAB_FILE.to_string(),
        params_file: PARAMS_FILE.to_string(),
        tensors,
        blob_sha256: hex_sha256(&blob),
    };
    fs::write(dir.join(PARAMS_FILE), &blob)?;
    vocab
        .save(&dir.join(VOCAB_FILE))
        .map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
    let mut f = fs::File::create(dir.join(MANIFEST_FILE))?;
    serde_json::to_writer_pretty(&mut f, &manifest)
        .map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
    f.write_all(b"\n")?;
    Ok(())
}

/// Loads and verifies a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<CheckpointBundle, ModelError> {
    let manifest_raw = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: Manifest = serde_json::from_str(&manifest_raw)
        .map_err(|e| ModelError::BadCheckpoint(format!("manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(ModelError::VersionMismatch(format!(
            "checkpoint format {} but this build reads {}",
            manifest.format_version, FORMAT_VERSION
        )));
    }
    let layout = Layout::new(&manifest.config);
    if layout.specs().len() != manifest.tensors.len() {
        return Err(ModelError::VersionMismatch(format!(
            "tensor count {} does not match the {} tensors this config defines",
            manifest.tensors.len(),
            layout.specs().len()
        )));
    }
    for (spec, entry) in layout.specs().iter().zip(&manifest.tensors) {
        if spec.name != entry.name || spec.shape != entry.shape || spec.offset != entry.offset {
            return Err(ModelError::VersionMismatch(format!(
                "tensor {} ({:?} at {}) does not match expected {} ({:?} at {})",
                entry.name, entry.shape, entry.offset, spec.name, spec.shape, spec.offset
            )));
        }
    }
    let blob = fs::read(dir.join(&manifest.params_file))?;
    if blob.len() != layout.total_len() * 4 {
        return Err(ModelError::BadCheckpoint(format!(
            "blob is {} bytes, expected {}",
            blob.len(),
            layout.total_len() * 4
        )));
    }
    if hex_sha256(&blob) != manifest.blob_sha256 {
        return Err(ModelError::ChecksumMismatch("params.bin".to_string()));
    }
    for entry in &manifest.tensors {
        let slice = &blob[entry.offset * 4..(entry.offset + entry.len) * 4];
        if hex_sha256(slice) != entry.sha256 {
            return Err(ModelError::ChecksumMismatch(entry.name.clone()));
        }
    }
    let data: Vec<f32> = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let vocab = Vocab::load(&dir.join(&manifest.vocab_file))
        .map_err(|e| ModelError::BadCheckpoint(e.to_string()))?;
    if vocab.size() != manifest.config.vocab_size {
        return Err(ModelError::VersionMismatch(format!(
            "vocab has {} tokens but config says {}",
            vocab.size(),
            manifest.config.vocab_size
        )));
    }
    Ok(CheckpointBundle {
        params: ParamSet {
            layout: std::sync::Arc::new(layout),
            data,
        },
        config: manifest.config,
        vocab,
    })
}

fn hex_sha256(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut s = String::with_capacity(64);
    for b in digest {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
