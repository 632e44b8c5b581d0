//! Binary checkpoints.
//!
//! Layout (little endian): magic `NAPCKPT`, `u32` version, `u32` length of
//! a UTF-8 `key = value` config block, the block, `u32` tensor count, then
//! per tensor a `u32` name length, the name, a `u32` rank, `rank` `u32`
//! extents and the values as `f32`.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{NapConfig, NapModel};
use crate::numeric::{ParamStore, Precision, Tensor};

pub const MAGIC: &[u8; 7] = b"NAPCKPT";
pub const VERSION: u32 = 1;

/// Keys prefixed with this go to the metadata map instead of the config.
const META_PREFIX: &str = "meta.";

/// Free-form `key = value` notes stored next to the config, such as the
/// scenes a model was trained on.
pub type CheckpointMeta = BTreeMap<String, String>;

pub fn checkpoint_bytes(model: &NapModel, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let mut block = model.config().to_text();
    for (k, v) in meta {
        if k.contains(['=', '\n']) || v.contains('\n') {
            return Err(Error::Checkpoint(format!("metadata entry `{k}` cannot be stored")));
        }
        block.push_str(&format!("{META_PREFIX}{k} = {v}\n"));
    }
    let store = model.params();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(block.len() as u32).to_le_bytes());
    out.extend_from_slice(block.as_bytes());
    out.extend_from_slice(&(store.len() as u32).to_le_bytes());
    for id in store.ids() {
        let name = store.name(id).as_bytes();
        let t = store.value(id);
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name);
        out.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated file while reading {what}")));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

/// Parses a checkpoint. Nothing is returned unless the whole file is
/// consistent with its config.
pub fn model_from_bytes(bytes: &[u8]) -> Result<(NapModel, CheckpointMeta)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len(), "magic")? != MAGIC {
        return Err(Error::Checkpoint("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported checkpoint version {version}")));
    }
    let n = r.u32("config length")? as usize;
    let block = std::str::from_utf8(r.take(n, "config block")?)
        .map_err(|_| Error::Checkpoint("config block is not UTF-8".into()))?;
    let mut cfg_text = String::new();
    let mut meta = CheckpointMeta::new();
    for line in block.lines() {
        match line.strip_prefix(META_PREFIX) {
            Some(rest) => {
                let (k, v) = rest
                    .split_once(" = ")
                    .ok_or_else(|| Error::Checkpoint(format!("bad metadata line `{line}`")))?;
                meta.insert(k.to_string(), v.to_string());
            }
            None => {
                cfg_text.push_str(line);
                cfg_text.push('\n');
            }
        }
    }
    let config = NapConfig::from_text(&cfg_text).map_err(|e| Error::Checkpoint(format!("config block: {e}")))?;
    let count = r.u32("tensor count")? as usize;
    let mut store = ParamStore::new(Precision::F32);
    for _ in 0..count {
        let len = r.u32("tensor name length")? as usize;
        let name = std::str::from_utf8(r.take(len, "tensor name")?)
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32("tensor rank")? as usize;
        if rank == 0 || rank > 8 {
            return Err(Error::Checkpoint(format!("tensor `{name}` has rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor shape")? as usize);
        }
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let numel = numel.ok_or_else(|| Error::Checkpoint(format!("tensor `{name}` is too large")))?;
        let raw = r.take(numel.checked_mul(4).unwrap_or(usize::MAX), "tensor values")?;
        let data = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
            .collect();
        let t = Tensor::new(shape, data).map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
        store
            .insert(&name, t)
            .map_err(|e| Error::Checkpoint(format!("tensor `{name}`: {e}")))?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((NapModel::from_params(config, store)?, meta))
}

pub fn save_checkpoint(model: &NapModel, meta: &CheckpointMeta, path: &Path) -> Result<()> {
    let bytes = checkpoint_bytes(model, meta)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(NapModel, CheckpointMeta)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    model_from_bytes(&bytes)
}
