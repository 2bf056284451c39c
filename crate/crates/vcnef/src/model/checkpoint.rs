//! Model checkpoint format.
//!
//! Layout: magic "VCNP", a version u32, the metadata length as u64, JSON
//! metadata (config, time normalization, conventions, provenance), then one
//! record per parameter in registration order: name length u64, name bytes,
//! shape rank u64, extents u64 each, float32 little-endian payload. Writing
//! the same model twice produces identical bytes.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::forward::Model;
use super::params::ParameterStore;
use super::{init_params, ModelConfig};
use crate::array::{Array, ArrayError, Scalar};

pub const MAGIC: &[u8; 4] = b"VCNP";
pub const VERSION: u32 = 1;

/// How a model maps dataset timestamps to its normalized query interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeConvention {
    /// Query times are measured from the conditioning frame and normalized
    /// by the remaining horizon.
    Relative,
    /// Query times are absolute timestamps normalized by the full horizon.
    Absolute,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    /// Horizon that maps dataset timestamps into the model's (0, 1].
    pub time_norm: f64,
    pub time_convention: TimeConvention,
    /// Training seed; distinct from the config's initialization seed.
    pub seed: u64,
    /// Completed training epochs at save time.
    pub epoch: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub config_hash: Option<String>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("bad magic: not a checkpoint file")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("truncated checkpoint: needed {expected} more bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("checkpoint does not match its config: {what}")]
    Mismatch { what: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Array(#[from] ArrayError),
}

/// Writes a checkpoint; parameter payloads are stored as float32 whatever
/// the in-memory precision.
pub fn write_checkpoint<T: Scalar>(
    path: &Path,
    meta: &CheckpointMeta,
    store: &ParameterStore<T>,
) -> Result<(), CheckpointError> {
    let meta_bytes = serde_json::to_vec(meta)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&meta_bytes)?;
    for (name, param) in store.iter() {
        w.write_all(&(name.len() as u64).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        let shape = param.value.shape();
        w.write_all(&(shape.len() as u64).to_le_bytes())?;
        for &e in shape {
            w.write_all(&(e as u64).to_le_bytes())?;
        }
        for &v in param.value.data() {
            w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub(crate) struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Cursor { bytes, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                expected: self.pos + n - self.bytes.len(),
                found: self.bytes.len(),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    pub(crate) fn take_u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn take_u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

/// Reads a checkpoint back into a float32 model, validating every
/// parameter's name and shape against what the embedded config creates.
pub fn read_checkpoint(path: &Path) -> Result<(CheckpointMeta, Model<f32>), CheckpointError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    let mut cur = Cursor { bytes: &bytes, pos: 0 };
    if cur.take(4).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.take_u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let meta_len = cur.take_u64()? as usize;
    let meta: CheckpointMeta = serde_json::from_slice(cur.take(meta_len)?)?;
    meta.model.validate()?;

    let mut store: ParameterStore<f32> = init_params(&meta.model)?;
    let expected: Vec<(String, Vec<usize>)> =
        store.iter().map(|(n, p)| (n.to_string(), p.value.shape().to_vec())).collect();
    for (name, shape) in &expected {
        let name_len = cur.take_u64()? as usize;
        let got_name = std::str::from_utf8(cur.take(name_len)?)
            .map_err(|_| CheckpointError::Mismatch { what: "parameter name is not UTF-8".into() })?;
        if got_name != name {
            return Err(CheckpointError::Mismatch {
                what: format!("found parameter '{got_name}' where '{name}' belongs"),
            });
        }
        let rank = cur.take_u64()? as usize;
        let mut got_shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            got_shape.push(cur.take_u64()? as usize);
        }
        if &got_shape != shape {
            return Err(CheckpointError::Mismatch {
                what: format!("parameter '{name}' has shape {got_shape:?}, config expects {shape:?}"),
            });
        }
        let numel: usize = shape.iter().product();
        let payload = cur.take(numel * 4)?;
        let data: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        store.set(name, Array::from_vec(shape.clone(), data)?)?;
    }
    if cur.pos != bytes.len() {
        return Err(CheckpointError::Mismatch {
            what: format!("{} trailing bytes after the last parameter", bytes.len() - cur.pos),
        });
    }
    let model = Model { cfg: meta.model.clone(), store };
    Ok((meta, model))
}
