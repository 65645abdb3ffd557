//! Versioned container of named `f64` tensors with a JSON header.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   8 bytes   "AV2TTNSR"
//! version u32
//! hlen    u64       length of the JSON header
//! header  hlen bytes
//! data    f64 values of every tensor, concatenated in header order
//! ```
//!
//! The header records each tensor's name, shape and offset, the total data
//! length, and a SHA-256 digest of the data block. Readers reject any file
//! whose data block is shorter or longer than declared.

use std::path::Path;

use ndarray::{Array1, Array2, ArrayD, IxDyn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::nn::hex;

pub const MAGIC: &[u8; 8] = b"AV2TTNSR";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    meta: serde_json::Value,
    tensors: Vec<TensorEntry>,
    data_len: usize,
    sha256: String,
}

/// Ordered set of named tensors plus free-form metadata.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TensorFile {
    pub meta: serde_json::Value,
    pub tensors: Vec<(String, ArrayD<f64>)>,
}

impl TensorFile {
    pub fn new(meta: serde_json::Value) -> Self {
        Self {
            meta,
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: &[usize], data: &[f64]) {
        let arr = ArrayD::from_shape_vec(IxDyn(shape), data.to_vec()).expect("shape matches data");
        self.tensors.push((name.into(), arr));
    }

    pub fn push_matrix(&mut self, name: impl Into<String>, m: &Array2<f64>) {
        let data: Vec<f64> = m.iter().copied().collect();
        self.push(name, &[m.nrows(), m.ncols()], &data);
    }

    pub fn push_vector(&mut self, name: impl Into<String>, v: &Array1<f64>) {
        let data: Vec<f64> = v.iter().copied().collect();
        self.push(name, &[v.len()], &data);
    }

    pub fn get(&self, name: &str) -> Option<&ArrayD<f64>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn require(&self, name: &str) -> Result<&ArrayD<f64>> {
        self.get(name)
            .ok_or_else(|| Error::Invalid(format!("tensor {name:?} missing from file")))
    }

    pub fn matrix(&self, name: &str) -> Result<Array2<f64>> {
        self.require(name)?
            .clone()
            .into_dimensionality()
            .map_err(|_| Error::Invalid(format!("tensor {name:?} is not 2-D")))
    }

    pub fn vector(&self, name: &str) -> Result<Array1<f64>> {
        self.require(name)?
            .clone()
            .into_dimensionality()
            .map_err(|_| Error::Invalid(format!("tensor {name:?} is not 1-D")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut data = Vec::new();
        let mut entries = Vec::with_capacity(self.tensors.len());
        let mut offset = 0;
        for (name, t) in &self.tensors {
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape().to_vec(),
                offset,
            });
            for v in t.iter() {
                data.extend_from_slice(&v.to_le_bytes());
            }
            offset += t.len();
        }
        let header = Header {
            meta: self.meta.clone(),
            tensors: entries,
            data_len: data.len(),
            sha256: hex(&Sha256::digest(&data)),
        };
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + header.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let corrupt = |message: &str| Error::Corrupt {
            path: path.to_path_buf(),
            message: message.to_string(),
        };
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic or truncated preamble"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                path: path.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body = &bytes[20..];
        if body.len() < hlen {
            return Err(corrupt("truncated header"));
        }
        let header: Header =
            serde_json::from_slice(&body[..hlen]).map_err(|e| corrupt(&format!("header: {e}")))?;
        let data = &body[hlen..];
        if data.len() != header.data_len {
            return Err(corrupt(&format!(
                "data block is {} bytes, header declares {}",
                data.len(),
                header.data_len
            )));
        }
        if hex(&Sha256::digest(data)) != header.sha256 {
            return Err(corrupt("data digest mismatch"));
        }
        let values: Vec<f64> = data
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for entry in header.tensors {
            let len: usize = entry.shape.iter().product();
            let slice = values
                .get(entry.offset..entry.offset + len)
                .ok_or_else(|| corrupt(&format!("tensor {} out of bounds", entry.name)))?;
            let arr = ArrayD::from_shape_vec(IxDyn(&entry.shape), slice.to_vec())
                .map_err(|e| corrupt(&e.to_string()))?;
            tensors.push((entry.name, arr));
        }
        Ok(Self {
            meta: header.meta,
            tensors,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let bytes = self.to_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn sample() -> TensorFile {
        let mut f = TensorFile::new(json!({"seed": 3}));
        f.push("a", &[2, 2], &[1.0, -0.0, f64::MIN_POSITIVE, 4.5]);
        f.push("b", &[3], &[0.1, 0.2, 0.3]);
        f
    }

    #[test]
    fn bytes_round_trip_bit_exact() {
        let f = sample();
        let bytes = f.to_bytes().unwrap();
        let g = TensorFile::from_bytes(&bytes, Path::new("mem")).unwrap();
        assert_eq!(g.meta, f.meta);
        for ((na, ta), (nb, tb)) in f.tensors.iter().zip(&g.tensors) {
            assert_eq!(na, nb);
            let bits_a: Vec<u64> = ta.iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = tb.iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
    }

    #[test]
    fn truncation_is_rejected() {
        let bytes = sample().to_bytes().unwrap();
        for cut in [5, 15, 30, bytes.len() - 1] {
            let err = TensorFile::from_bytes(&bytes[..cut], Path::new("mem")).unwrap_err();
            assert!(matches!(err, Error::Corrupt { .. }), "cut {cut}: {err}");
        }
    }

    #[test]
    fn version_mismatch_is_explicit() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = TensorFile::from_bytes(&bytes, Path::new("mem")).unwrap_err();
        assert!(matches!(err, Error::Version { found: 7, .. }));
    }

    #[test]
    fn flipped_data_bit_fails_digest() {
        let mut bytes = sample().to_bytes().unwrap();
        let last = bytes.len() - 1;
        bytes[last] ^= 1;
        assert!(TensorFile::from_bytes(&bytes, Path::new("mem")).is_err());
    }
}
