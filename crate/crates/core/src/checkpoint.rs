//! Single-file model checkpoints.
//!
//! Layout (all integers little-endian):
//!
//! | bytes        | content                                  |
//! |--------------|------------------------------------------|
//! | 8            | magic `S2SCKPT\0`                        |
//! | 4            | format version, `u32`                    |
//! | 8            | manifest length `m`, `u64`               |
//! | m            | UTF-8 JSON [`Manifest`]                  |
//! | rest         | parameter blob, little-endian scalars    |
//!
//! Tensor offsets in the manifest are byte offsets into the blob.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, Seq2SeqModel};
use crate::tensor::{Precision, Scalar};

pub const MAGIC: [u8; 8] = *b"S2SCKPT\0";
pub const VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub config: ModelConfig,
    pub precision: Precision,
    /// Seed of the run that produced the parameters.
    pub seed: u64,
    /// Epoch the parameters come from; 0 for untrained weights.
    pub epoch: usize,
    pub tensors: Vec<TensorEntry>,
}

impl Manifest {
    fn blob_len(&self) -> u64 {
        let bytes = self.precision_bytes() as u64;
        self.tensors
            .iter()
            .map(|t| t.shape.iter().product::<usize>() as u64 * bytes)
            .sum()
    }

    fn precision_bytes(&self) -> usize {
        match self.precision {
            Precision::Single => 4,
            Precision::Double => 8,
        }
    }
}

pub fn encode<T: Scalar>(model: &Seq2SeqModel<T>, seed: u64, epoch: usize) -> Result<Vec<u8>> {
    let params = model.params();
    let mut tensors = Vec::with_capacity(params.len());
    let mut offset = 0u64;
    for p in &params {
        tensors.push(TensorEntry {
            name: p.name.clone(),
            shape: p.shape.clone(),
            offset,
        });
        offset += (p.data.len() * T::BYTES) as u64;
    }
    let manifest = Manifest {
        config: model.config().clone(),
        precision: T::PRECISION,
        seed,
        epoch,
        tensors,
    };
    let json = serde_json::to_vec(&manifest)?;
    let mut out = Vec::with_capacity(PREAMBLE + json.len() + offset as usize);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for p in &params {
        for &v in p.data {
            v.write_le(&mut out);
        }
    }
    Ok(out)
}

/// Splits a checkpoint into its manifest and blob, validating the framing.
pub fn decode_manifest(bytes: &[u8]) -> Result<(Manifest, &[u8])> {
    if bytes.len() < PREAMBLE {
        return Err(Error::Checkpoint(format!(
            "file is {} bytes, shorter than the header",
            bytes.len()
        )));
    }
    if bytes[..8] != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {VERSION})"
        )));
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    let rest = &bytes[PREAMBLE..];
    if len > rest.len() as u64 {
        return Err(Error::Checkpoint(format!(
            "manifest length {len} exceeds the {} bytes remaining",
            rest.len()
        )));
    }
    let (json, blob) = rest.split_at(len as usize);
    let manifest: Manifest =
        serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("corrupt manifest: {e}")))?;
    manifest.config.validate()?;
    let want = manifest.blob_len();
    if blob.len() as u64 != want {
        return Err(Error::Checkpoint(format!(
            "blob holds {} bytes but the manifest describes {want}",
            blob.len()
        )));
    }
    Ok((manifest, blob))
}

pub fn decode<T: Scalar>(bytes: &[u8]) -> Result<(Seq2SeqModel<T>, Manifest)> {
    let (manifest, blob) = decode_manifest(bytes)?;
    if manifest.precision != T::PRECISION {
        return Err(Error::Checkpoint(format!(
            "checkpoint stores {} precision, {} requested",
            manifest.precision,
            T::PRECISION
        )));
    }
    let mut model = Seq2SeqModel::<T>::zeros(manifest.config.clone())?;
    let params = model.params_mut();
    if params.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "manifest lists {} tensors, the model has {}",
            manifest.tensors.len(),
            params.len()
        )));
    }
    for (param, entry) in params.into_iter().zip(&manifest.tensors) {
        if param.name != entry.name {
            return Err(Error::Checkpoint(format!(
                "expected tensor {}, found {}",
                param.name, entry.name
            )));
        }
        if param.shape != entry.shape {
            return Err(Error::Checkpoint(format!(
                "{}: shape {:?} does not match the configured {:?}",
                entry.name, entry.shape, param.shape
            )));
        }
        let start = entry.offset as usize;
        let end = start + param.data.len() * T::BYTES;
        let raw = blob
            .get(start..end)
            .ok_or_else(|| Error::Checkpoint(format!("{}: offset {start} runs past the blob", entry.name)))?;
        for (dst, chunk) in param.data.iter_mut().zip(raw.chunks_exact(T::BYTES)) {
            *dst = T::read_le(chunk);
        }
    }
    Ok((model, manifest))
}

pub fn save_checkpoint<T: Scalar>(model: &Seq2SeqModel<T>, seed: u64, epoch: usize, path: &Path) -> Result<()> {
    let bytes = encode(model, seed, epoch)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<(Seq2SeqModel<T>, Manifest)> {
    decode(&read(path)?)
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    Ok(decode_manifest(&read(path)?)?.0)
}

/// Loads a checkpoint only if it was written for `expected`.
pub fn load_for_config<T: Scalar>(path: &Path, expected: &ModelConfig) -> Result<(Seq2SeqModel<T>, Manifest)> {
    let (model, manifest) = load_checkpoint(path)?;
    if &manifest.config != expected {
        let c = &manifest.config;
        return Err(Error::Checkpoint(format!(
            "checkpoint has V={} H={} D={} L={}, session expects V={} H={} D={} L={}",
            c.vocab_size,
            c.hidden_size,
            c.embed_dim,
            c.input_length,
            expected.vocab_size,
            expected.hidden_size,
            expected.embed_dim,
            expected.input_length
        )));
    }
    Ok((model, manifest))
}
