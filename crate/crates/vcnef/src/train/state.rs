//! Full training state on disk: parameters, optimizer moments, generator
//! position, and counters, all at native precision so a resumed run
//! replays the remaining steps bit for bit.
//!
//! Layout: magic "VCNT", format version, a JSON header, then length-
//! prefixed named records (every parameter, then first and second moments
//! for the trainable ones) with payloads at the training precision.

use std::fs::File;
use std::io::{BufWriter, Write as IoWrite};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::array::{Array, Scalar};
use crate::model::checkpoint::{CheckpointError, CheckpointMeta, Cursor};
use crate::model::forward::Model;
use crate::rng::{Rng, RngState};
use super::adam::Adam;
use super::{TrainConfig, Trainer};

const MAGIC: &[u8; 4] = b"VCNT";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateMeta {
    /// Payload precision, "f32" or "f64".
    pub dtype: String,
    pub checkpoint: CheckpointMeta,
    pub train: TrainConfig,
    pub global_step: u64,
    pub rng: RngState,
    pub opt_steps: u64,
}

fn dtype_name<T: Scalar>() -> &'static str {
    if std::mem::size_of::<T>() == 4 {
        "f32"
    } else {
        "f64"
    }
}

fn write_record<T: Scalar, W: IoWrite>(
    w: &mut W,
    name: &str,
    arr: &Array<T>,
) -> Result<(), CheckpointError> {
    w.write_all(&(name.len() as u64).to_le_bytes())?;
    w.write_all(name.as_bytes())?;
    let shape = arr.shape();
    w.write_all(&(shape.len() as u64).to_le_bytes())?;
    for &e in shape {
        w.write_all(&(e as u64).to_le_bytes())?;
    }
    if std::mem::size_of::<T>() == 4 {
        for &v in arr.data() {
            w.write_all(&(v.to_f64() as f32).to_le_bytes())?;
        }
    } else {
        for &v in arr.data() {
            w.write_all(&v.to_f64().to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_record<T: Scalar>(
    cur: &mut Cursor,
    want_name: &str,
    want_shape: &[usize],
) -> Result<Array<T>, CheckpointError> {
    let name_len = cur.take_u64()? as usize;
    let name = std::str::from_utf8(cur.take(name_len)?)
        .map_err(|_| CheckpointError::Mismatch { what: "record name is not UTF-8".into() })?;
    if name != want_name {
        return Err(CheckpointError::Mismatch {
            what: format!("expected record {want_name}, found {name}"),
        });
    }
    let rank = cur.take_u64()? as usize;
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        shape.push(cur.take_u64()? as usize);
    }
    if shape != want_shape {
        return Err(CheckpointError::Mismatch {
            what: format!("record {name} has shape {shape:?}, expected {want_shape:?}"),
        });
    }
    let count: usize = shape.iter().product();
    let data = if std::mem::size_of::<T>() == 4 {
        let bytes = cur.take(count * 4)?;
        bytes
            .chunks_exact(4)
            .map(|b| T::from_f64(f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64))
            .collect()
    } else {
        let bytes = cur.take(count * 8)?;
        bytes
            .chunks_exact(8)
            .map(|b| T::from_f64(f64::from_le_bytes(b.try_into().expect("8 bytes"))))
            .collect()
    };
    Ok(Array::from_vec(shape, data)?)
}

/// Writes the trainer's complete state. The same trainer always produces
/// the same bytes.
pub fn save_train_state<T: Scalar>(
    path: &Path,
    trainer: &Trainer<T>,
    config_hash: Option<String>,
) -> Result<(), CheckpointError> {
    let meta = StateMeta {
        dtype: dtype_name::<T>().to_string(),
        checkpoint: trainer.checkpoint_meta(config_hash),
        train: trainer.cfg.clone(),
        global_step: trainer.global_step,
        rng: trainer.rng.state(),
        opt_steps: trainer.opt.steps(),
    };
    let meta_bytes = serde_json::to_vec(&meta)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(meta_bytes.len() as u64).to_le_bytes())?;
    w.write_all(&meta_bytes)?;
    for (name, param) in trainer.model.store.iter() {
        write_record(&mut w, name, &param.value)?;
    }
    for (name, (m, v)) in trainer.opt.moments() {
        write_record(&mut w, name, m)?;
        write_record(&mut w, name, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Restores a trainer mid-run. The requested precision must match the
/// saved one; a float32 state reloads only as a float32 trainer.
pub fn load_train_state<T: Scalar>(path: &Path) -> Result<Trainer<T>, CheckpointError> {
    let bytes = std::fs::read(path)?;
    let mut cur = Cursor::new(&bytes);
    if cur.take(4)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = cur.take_u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let meta_len = cur.take_u64()? as usize;
    let meta: StateMeta = serde_json::from_slice(cur.take(meta_len)?)?;
    if meta.dtype != dtype_name::<T>() {
        return Err(CheckpointError::Mismatch {
            what: format!(
                "state holds {} values; load it with a {} trainer",
                meta.dtype,
                meta.dtype
            ),
        });
    }

    let mut model = Model::<T>::new(meta.checkpoint.model.clone())
        .map_err(|e| CheckpointError::Mismatch { what: e.to_string() })?;
    let expected: Vec<(String, Vec<usize>, bool)> = model
        .store
        .iter()
        .map(|(n, p)| (n.to_string(), p.value.shape().to_vec(), p.trainable))
        .collect();
    for (name, shape, _) in &expected {
        let arr = read_record::<T>(&mut cur, name, shape)?;
        model.store.set(name, arr)?;
    }
    let mut moments: IndexMap<String, (Array<T>, Array<T>)> = IndexMap::new();
    for (name, shape, trainable) in &expected {
        if !trainable {
            continue;
        }
        let m = read_record::<T>(&mut cur, name, shape)?;
        let v = read_record::<T>(&mut cur, name, shape)?;
        moments.insert(name.clone(), (m, v));
    }
    if cur.remaining() != 0 {
        return Err(CheckpointError::Mismatch {
            what: format!("{} unexpected trailing bytes", cur.remaining()),
        });
    }

    let opt = Adam::from_parts(moments, meta.opt_steps);
    let rng = Rng::restore(meta.rng);
    Ok(Trainer::from_state(
        model,
        meta.train,
        meta.checkpoint.time_norm,
        meta.checkpoint.epoch,
        meta.global_step,
        opt,
        rng,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate, DataConfig, Dataset};
    use crate::model::forward::GridSpec;
    use crate::model::ModelConfig;

    fn dataset() -> Dataset<f64> {
        generate(&DataConfig {
            n: 4,
            s: 16,
            n_t: 6,
            t_final: 2.0,
            param_values: vec![0.4],
            seed: 7,
            ..DataConfig::default()
        })
        .unwrap()
    }

    fn trainer() -> Trainer<f64> {
        let model = Model::new(ModelConfig {
            d: 16,
            heads: 2,
            n_enc: 1,
            n_mod: 1,
            ..ModelConfig::default()
        })
        .unwrap();
        let cfg = TrainConfig {
            epochs: 4,
            batch_size: 2,
            max_lr: 1e-3,
            time_subsample: 2,
            ..TrainConfig::default()
        };
        Trainer::new(model, cfg, 2.0).unwrap()
    }

    #[test]
    fn resuming_replays_the_exact_remaining_run() {
        let data = dataset();
        let grid = GridSpec::line(data.meta.unit_grid());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mid.state");

        let mut straight = trainer();
        for _ in 0..2 {
            straight.train_epoch(&data, &grid).unwrap();
        }
        save_train_state(&path, &straight, None).unwrap();
        let mut tail_a = Vec::new();
        for _ in 0..2 {
            let rep = straight.train_epoch(&data, &grid).unwrap();
            tail_a.extend(rep.rows.iter().map(|r| (r.step, r.lr.to_bits(), r.loss.to_bits())));
        }

        let mut resumed = load_train_state::<f64>(&path).unwrap();
        assert_eq!(resumed.epoch, 2);
        let mut tail_b = Vec::new();
        for _ in 0..2 {
            let rep = resumed.train_epoch(&data, &grid).unwrap();
            tail_b.extend(rep.rows.iter().map(|r| (r.step, r.lr.to_bits(), r.loss.to_bits())));
        }
        assert_eq!(tail_a, tail_b);

        for ((na, pa), (nb, pb)) in
            straight.model.store.iter().zip(resumed.model.store.iter())
        {
            assert_eq!(na, nb);
            assert_eq!(&pa.value, &pb.value);
        }
    }

    #[test]
    fn state_files_are_byte_deterministic() {
        let data = dataset();
        let grid = GridSpec::line(data.meta.unit_grid());
        let mut t = trainer();
        t.train_epoch(&data, &grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.state");
        let b = dir.path().join("b.state");
        save_train_state(&a, &t, Some("abc123".into())).unwrap();
        save_train_state(&b, &t, Some("abc123".into())).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn precision_mismatch_is_refused() {
        let model = Model::<f32>::new(ModelConfig {
            d: 16,
            heads: 2,
            n_enc: 1,
            n_mod: 1,
            ..ModelConfig::default()
        })
        .unwrap();
        let t = Trainer::new(model, TrainConfig::default(), 2.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f32.state");
        save_train_state(&path, &t, None).unwrap();
        let err = load_train_state::<f64>(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("f32"), "unhelpful message: {msg}");
    }

    #[test]
    fn corrupted_state_is_rejected() {
        let model = Model::<f64>::new(ModelConfig {
            d: 16,
            heads: 2,
            n_enc: 1,
            n_mod: 1,
            ..ModelConfig::default()
        })
        .unwrap();
        let t = Trainer::new(model, TrainConfig::default(), 2.0).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.state");
        save_train_state(&path, &t, None).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[0] = b'X';
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            load_train_state::<f64>(&path),
            Err(CheckpointError::BadMagic)
        ));
    }
}
