//! Binary model checkpoints.
//!
//! Layout (little-endian): 8-byte magic `NDFCKPT\0`, `u32` version, `u32`
//! header length, JSON header (config and domain), then for every parameter
//! slice in [`NdfModel::parameters`] order a `u64` length and the raw `f64`
//! values. Loading is value-exact.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{NdfConfig, NdfModel};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"NDFCKPT\0";

#[derive(Serialize, Deserialize)]
struct Header {
    config: NdfConfig,
    domain: (usize, usize),
}

pub fn save_checkpoint(model: &NdfModel, path: &Path) -> Result<()> {
    let header = serde_json::to_vec(&Header {
        config: model.config.clone(),
        domain: model.domain,
    })
    .map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut out = Vec::with_capacity(16 + header.len() + model.param_count() * 8);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for slice in model.parameters() {
        out.extend_from_slice(&(slice.len() as u64).to_le_bytes());
        for v in slice {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<NdfModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

fn decode(bytes: &[u8]) -> Result<NdfModel> {
    let err = |m: &str| Error::Checkpoint(m.to_string());
    let mut cursor = Cursor { bytes, pos: 0 };
    if cursor.take(8).ok_or_else(|| err("truncated"))? != MAGIC {
        return Err(err("bad magic, not a checkpoint file"));
    }
    let version = cursor.u32().ok_or_else(|| err("truncated"))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {version}, expected {CHECKPOINT_VERSION}"
        )));
    }
    let header_len = cursor.u32().ok_or_else(|| err("truncated"))? as usize;
    let header: Header = serde_json::from_slice(cursor.take(header_len).ok_or_else(|| err("truncated header"))?)
        .map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    let mut model = NdfModel::new(&header.config, header.domain)?;
    for slice in model.parameters_mut() {
        let len = cursor.u64().ok_or_else(|| err("truncated"))? as usize;
        if len != slice.len() {
            return Err(err("parameter array length does not match config"));
        }
        let raw = cursor.take(len * 8).ok_or_else(|| err("truncated parameters"))?;
        for (v, b) in slice.iter_mut().zip(raw.chunks_exact(8)) {
            *v = f64::from_le_bytes(b.try_into().expect("8 bytes"));
        }
    }
    if cursor.pos != bytes.len() {
        return Err(err("trailing bytes"));
    }
    Ok(model)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let s = self.bytes.get(self.pos..self.pos.checked_add(n)?)?;
        self.pos += n;
        Some(s)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4).map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn u64(&mut self) -> Option<u64> {
        self.take(8).map(|b| u64::from_le_bytes(b.try_into().unwrap()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ndf::tests::tiny_config;

    #[test]
    fn roundtrip_is_exact() {
        let mut m = NdfModel::new(&tiny_config(), (16, 12)).unwrap();
        m.parameters_mut()[0][3] = 0.1 + 0.2;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&m, &path).unwrap();
        assert_eq!(load_checkpoint(&path).unwrap(), m);
    }

    #[test]
    fn corrupt_files_rejected() {
        let m = NdfModel::new(&tiny_config(), (8, 8)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ckpt");
        save_checkpoint(&m, &path).unwrap();
        let good = std::fs::read(&path).unwrap();

        assert!(decode(b"garbage").is_err());
        let mut wrong_version = good.clone();
        wrong_version[8] = 9;
        assert!(decode(&wrong_version).unwrap_err().to_string().contains("version"));
        assert!(decode(&good[..good.len() - 3]).is_err());
        let mut trailing = good.clone();
        trailing.push(0);
        assert!(decode(&trailing).is_err());
    }
}
