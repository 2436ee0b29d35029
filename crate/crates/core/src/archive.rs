//! Flat key → matrix archive.
//!
//! Layout:
//!
//! ```text
//! magic     8 bytes   "DIETARC\x01"
//! len       u64 LE    byte length of the manifest
//! manifest  JSON      {"format", "version", "meta", "tensors": [{key, rows, cols, offset}]}
//! payload   f64 LE    all tensors back to back, `offset` counted in elements
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MAGIC: &[u8; 8] = b"DIETARC\x01";
const FORMAT: &str = "diet-archive";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub key: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub meta: Value,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct TensorArchive {
    pub meta: Value,
    entries: Vec<(String, Matrix)>,
}

impl TensorArchive {
    pub fn new(meta: Value) -> Self {
        Self {
            meta,
            entries: Vec::new(),
        }
    }

    pub fn insert(&mut self, key: impl Into<String>, m: Matrix) -> Result<()> {
        let key = key.into();
        if self.get(&key).is_some() {
            return Err(Error::Archive(format!("duplicate key '{key}'")));
        }
        self.entries.push((key, m));
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<&Matrix> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, m)| m)
    }

    pub fn require(&self, key: &str) -> Result<&Matrix> {
        self.get(key)
            .ok_or_else(|| Error::Archive(format!("missing tensor '{key}'")))
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut tensors = Vec::with_capacity(self.entries.len());
        let mut offset = 0;
        for (key, m) in &self.entries {
            tensors.push(TensorEntry {
                key: key.clone(),
                rows: m.rows(),
                cols: m.cols(),
                offset,
            });
            offset += m.data().len();
        }
        let manifest = Manifest {
            format: FORMAT.into(),
            version: VERSION,
            meta: self.meta.clone(),
            tensors,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(16 + json.len() + offset * 8);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in &self.entries {
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(Error::Archive("bad magic".into()));
        }
        let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body = bytes
            .get(16..16 + len)
            .ok_or_else(|| Error::Archive("truncated manifest".into()))?;
        let manifest: Manifest = serde_json::from_slice(body)?;
        if manifest.format != FORMAT || manifest.version != VERSION {
            return Err(Error::Archive(format!(
                "unsupported archive {} v{}",
                manifest.format, manifest.version
            )));
        }
        let payload = &bytes[16 + len..];
        let mut entries = Vec::with_capacity(manifest.tensors.len());
        for t in manifest.tensors {
            let count = t.rows * t.cols;
            let start = t.offset * 8;
            let chunk = payload
                .get(start..start + count * 8)
                .ok_or_else(|| Error::Archive(format!("payload too short for '{}'", t.key)))?;
            let data = chunk
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            entries.push((t.key, Matrix::from_vec(t.rows, t.cols, data)?));
        }
        Ok(Self {
            meta: manifest.meta,
            entries,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
