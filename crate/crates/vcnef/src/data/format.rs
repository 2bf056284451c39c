//! On-disk dataset layout.
//!
//! ```text
//! "VCNF"  magic, 4 bytes
//! u32 LE  format version (currently 1)
//! u64 LE  metadata byte length
//! JSON    UTF-8 metadata (see [`DatasetMeta`])
//! f32 LE  payload, [N, N_t, s, c] row-major
//! ```
//!
//! Writing is deterministic: the same dataset always produces the same
//! bytes, and a read/write cycle is byte-identical. The payload is always
//! float32; writing a 64-bit dataset narrows it.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::array::{Array, Scalar};

use super::{DataError, Dataset, DatasetMeta};

pub const MAGIC: &[u8; 4] = b"VCNF";
pub const VERSION: u32 = 1;

pub fn write_dataset<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<(), DataError> {
    ds.validate()?;
    let meta = serde_json::to_vec(&ds.meta)?;
    let mut out = fs::File::create(path).map(std::io::BufWriter::new)?;
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(meta.len() as u64).to_le_bytes())?;
    out.write_all(&meta)?;
    let mut payload = Vec::with_capacity(ds.values.numel() * 4);
    for &v in ds.values.data() {
        payload.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
    }
    out.write_all(&payload)?;
    out.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset<f32>, DataError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 16 {
        return Err(DataError::Truncated { expected: 16, found: bytes.len() as u64 });
    }
    if &bytes[0..4] != MAGIC {
        return Err(DataError::BadMagic);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != VERSION {
        return Err(DataError::BadVersion(version));
    }
    let meta_len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
    let body = &bytes[16..];
    if body.len() < meta_len {
        return Err(DataError::Truncated {
            expected: (16 + meta_len) as u64,
            found: bytes.len() as u64,
        });
    }
    let meta: DatasetMeta = serde_json::from_slice(&body[..meta_len])?;
    let expected = meta.n * meta.n_t * meta.s * meta.c * 4;
    let payload = &body[meta_len..];
    if payload.len() < expected {
        return Err(DataError::Truncated {
            expected: (16 + meta_len + expected) as u64,
            found: bytes.len() as u64,
        });
    }
    if payload.len() > expected {
        return Err(DataError::MetaMismatch {
            what: format!("{} trailing bytes after payload", payload.len() - expected),
        });
    }
    let data: Vec<f32> = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let ds = Dataset {
        values: Array::from_vec(vec![meta.n, meta.n_t, meta.s, meta.c], data)?,
        meta,
    };
    ds.validate()?;
    Ok(ds)
}
