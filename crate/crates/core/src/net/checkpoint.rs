//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes  "DVGANCKP"
//! version  u32
//! hlen     u64      length of the JSON header
//! header   hlen bytes of UTF-8 JSON: {"version", "meta", "tensors": [{"name", "shape", "offset"}]}
//! data     f64 values, row-major, at the element offsets listed in the header
//! ```
//!
//! Values are stored as raw IEEE-754 bits, so a write/read cycle is exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Matrix;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"DVGANCKP";
pub const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

/// Arbitrary JSON metadata plus named matrices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, Matrix)>,
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, value: Matrix) {
        self.tensors.push((name.into(), value));
    }

    /// Adds every parameter of `store` as `<prefix>/<name>`.
    pub fn push_store(&mut self, prefix: &str, store: &ParamStore) {
        for (name, value) in store.iter() {
            self.push(format!("{prefix}/{name}"), value.clone());
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Matrix> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, m)| m)
    }

    /// Fills `store` from the `<prefix>/...` tensors; names and shapes must match.
    pub fn load_store(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let lead = format!("{prefix}/");
        let mut loaded = ParamStore::new();
        for (name, value) in &self.tensors {
            if let Some(rest) = name.strip_prefix(&lead) {
                loaded.add(rest, value.clone());
            }
        }
        store.assign_from(&loaded)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0;
        let tensors = self
            .tensors
            .iter()
            .map(|(name, m)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: [m.nrows(), m.ncols()],
                    offset,
                };
                offset += m.len();
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            version: VERSION,
            meta: self.meta.clone(),
            tensors,
        })?;
        let mut out = Vec::with_capacity(20 + header.len() + 8 * offset);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for (_, m) in &self.tensors {
            for x in m.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = bytes.get(20..20 + hlen).ok_or_else(|| bad("truncated header"))?;
        let header: Header = serde_json::from_slice(body)?;
        let data = &bytes[20 + hlen..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let [r, c] = e.shape;
            let start = 8 * e.offset;
            let end = start + 8 * r * c;
            let raw = data
                .get(start..end)
                .ok_or_else(|| Error::Checkpoint(format!("tensor {} truncated", e.name)))?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect();
            let m = Array2::from_shape_vec((r, c), values).map_err(|err| Error::Checkpoint(err.to_string()))?;
            tensors.push((e.name, m));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    /// Writes to a temporary sibling then renames over `path`.
    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
        f.sync_all().map_err(|e| Error::io(&tmp, e))?;
        drop(f);
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
