//! Binary tensor container: a JSON header followed by named f32 tensors.
//!
//! Byte layout (all integers little-endian):
//!
//! | offset | size | content                                   |
//! |--------|------|-------------------------------------------|
//! | 0      | 4    | magic `ASLT`                              |
//! | 4      | 4    | container version (u32, currently 1)      |
//! | 8      | 8    | header length `n` in bytes (u64)          |
//! | 16     | n    | UTF-8 JSON header                         |
//! | 16 + n | ...  | tensor payloads, f32 little-endian        |
//!
//! The header is `{"meta": <any JSON>, "tensors": [{"name", "shape",
//! "offset", "len"}]}` where `offset` is in bytes from the start of the
//! payload section and `len` counts f32 elements.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: &[u8; 4] = b"ASLT";
pub const CONTAINER_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl NamedTensor {
    pub fn from_array<T: Real>(name: impl Into<String>, a: &Array2<T>) -> Self {
        NamedTensor {
            name: name.into(),
            shape: a.shape().to_vec(),
            data: a.iter().map(|v| v.as_f32()).collect(),
        }
    }

    pub fn to_array<T: Real>(&self) -> Result<Array2<T>> {
        let (r, c) = match self.shape.as_slice() {
            [r, c] => (*r, *c),
            [n] => (1, *n),
            s => {
                return Err(Error::Shape(format!(
                    "tensor `{}` has rank {}, expected 2",
                    self.name,
                    s.len()
                )))
            }
        };
        let data = self.data.iter().map(|&v| T::of_f32(v)).collect();
        Array2::from_shape_vec((r, c), data)
            .map_err(|e| Error::Shape(format!("tensor `{}`: {e}", self.name)))
    }
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorFile {
    pub meta: serde_json::Value,
    pub tensors: Vec<NamedTensor>,
}

impl TensorFile {
    pub fn new(meta: serde_json::Value) -> Self {
        TensorFile {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, t: NamedTensor) {
        self.tensors.push(t);
    }

    pub fn get(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn require(&self, name: &str) -> Result<&NamedTensor> {
        self.get(name)
            .ok_or_else(|| Error::Shape(format!("tensor `{name}` missing from container")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut offset = 0u64;
        let entries = self
            .tensors
            .iter()
            .map(|t| {
                let e = TensorEntry {
                    name: t.name.clone(),
                    shape: t.shape.clone(),
                    offset,
                    len: t.data.len() as u64,
                };
                offset += 4 * t.data.len() as u64;
                e
            })
            .collect();
        let header = serde_json::to_vec(&Header {
            meta: self.meta.clone(),
            tensors: entries,
        })?;
        let mut out = Vec::with_capacity(16 + header.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CONTAINER_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for t in &self.tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..4] != MAGIC {
            return Err(Error::format(path, "bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
        if version != CONTAINER_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                expected: CONTAINER_VERSION,
                found: version,
            });
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let body = 16usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::format(path, "truncated header"))?;
        let header: Header = serde_json::from_slice(&bytes[16..body])?;
        let payload = &bytes[body..];
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for e in header.tensors {
            let expected: usize = e.shape.iter().product();
            if expected as u64 != e.len {
                return Err(Error::format(
                    path,
                    format!("tensor `{}` shape {:?} does not match length {}", e.name, e.shape, e.len),
                ));
            }
            let start = e.offset as usize;
            let end = start + 4 * e.len as usize;
            if end > payload.len() {
                return Err(Error::format(path, format!("tensor `{}` truncated", e.name)));
            }
            let data = payload[start..end]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            tensors.push(NamedTensor {
                name: e.name,
                shape: e.shape,
                data,
            });
        }
        Ok(TensorFile {
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
        }
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn container_roundtrip() {
        let mut f = TensorFile::new(json!({"kind": "test", "seed": 3}));
        f.push(NamedTensor {
            name: "a".into(),
            shape: vec![2, 3],
            data: vec![1.0, -2.5, 3.25, f32::MIN_POSITIVE, 0.0, 7.0],
        });
        f.push(NamedTensor {
            name: "b".into(),
            shape: vec![1, 1],
            data: vec![42.0],
        });
        let bytes = f.to_bytes().unwrap();
        assert_eq!(&bytes[..4], b"ASLT");
        let back = TensorFile::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(back, f);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn rejects_wrong_version() {
        let mut bytes = TensorFile::new(json!(null)).to_bytes().unwrap();
        bytes[4] = 9;
        assert!(matches!(
            TensorFile::from_bytes(&bytes, Path::new("x")),
            Err(Error::Version { found: 9, .. })
        ));
    }

    #[test]
    fn rejects_truncated_payload() {
        let mut f = TensorFile::new(json!({}));
        f.push(NamedTensor {
            name: "w".into(),
            shape: vec![4],
            data: vec![1.0; 4],
        });
        let bytes = f.to_bytes().unwrap();
        let cut = &bytes[..bytes.len() - 2];
        assert!(TensorFile::from_bytes(cut, Path::new("x")).is_err());
    }
}
