//! Parameter checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "WPPLCKPT"
//! version  u32      1
//! mlen     u32      length of the manifest in bytes
//! manifest mlen     UTF-8 JSON: {"meta": {...}, "arrays": [{network, name, shape}, ...]}
//! data              every array's values as f64, in manifest order
//! ```
//!
//! `meta` is free-form (dimensions, seeds, epoch and so on).

use std::io::{self, Read, Write};

use serde::{Deserialize, Serialize};

use super::params::ParamSet;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"WPPLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub network: String,
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub meta: serde_json::Value,
    pub arrays: Vec<ArrayEntry>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

pub fn write_checkpoint<W: Write>(mut w: W, params: &ParamSet, meta: serde_json::Value) -> Result<(), CheckpointError> {
    let manifest = Manifest {
        meta,
        arrays: params
            .iter()
            .map(|a| ArrayEntry {
                network: a.network.clone(),
                name: a.name.clone(),
                shape: [a.rows, a.cols],
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest)?;
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u32).to_le_bytes())?;
    w.write_all(&json)?;
    for a in params.iter() {
        for x in &a.data {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ParamSet, serde_json::Value), CheckpointError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let mut u = [0u8; 4];
    r.read_exact(&mut u)?;
    let version = u32::from_le_bytes(u);
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version(version));
    }
    r.read_exact(&mut u)?;
    let mut json = vec![0u8; u32::from_le_bytes(u) as usize];
    r.read_exact(&mut json)?;
    let manifest: Manifest = serde_json::from_slice(&json)?;
    let mut params = ParamSet::new();
    let mut b = [0u8; 8];
    for e in &manifest.arrays {
        let n = e.shape[0] * e.shape[1];
        let mut data = Vec::with_capacity(n);
        for _ in 0..n {
            r.read_exact(&mut b)?;
            data.push(f64::from_le_bytes(b));
        }
        params.add(&e.network, &e.name, e.shape[0], e.shape[1], data);
    }
    Ok((params, manifest.meta))
}
