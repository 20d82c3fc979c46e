//! Per-image feature vectors and the `UFV1` feature file format.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic        4 bytes  "UFV1"
//! record_count u32
//! dim          u32
//! record_count x {
//!     name_length u16
//!     name        name_length bytes, UTF-8
//!     values      dim x f32
//! }
//! ```
//!
//! The file length must equal the length implied by the header and records;
//! trailing bytes are rejected.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::roi_crop::{ImageTensor, ValueRange};

pub const MAGIC: &[u8; 4] = b"UFV1";
pub const HEADER_LEN: usize = 12;

/// Which of the two image streams a store feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamLabel {
    A,
    B,
}

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature dimension must be positive")]
    ZeroDim,
    #[error("record {name:?} has {actual} values, store dimension is {expected}")]
    DimMismatch {
        name: String,
        expected: usize,
        actual: usize,
    },
    #[error("duplicate record name {0:?}")]
    DuplicateName(String),
    #[error("record {name:?} holds a non-finite value at position {position}")]
    NonFinite { name: String, position: usize },
    #[error("record name {0:?} is longer than 65535 bytes")]
    NameTooLong(String),
    #[error("feature extraction expects a unit-range image")]
    NotUnitRange,
    #[error("format error at byte offset {offset}: {reason}")]
    Format { offset: usize, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub name: String,
    pub values: Vec<f32>,
}

impl FeatureVector {
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Named feature vectors of one shared dimension, kept in insertion order.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    label: StreamLabel,
    dim: usize,
    records: Vec<FeatureVector>,
    by_name: HashMap<String, usize>,
}

impl PartialEq for FeatureStore {
    fn eq(&self, other: &Self) -> bool {
        self.label == other.label && self.dim == other.dim && self.records == other.records
    }
}

impl FeatureStore {
    pub fn new(label: StreamLabel, dim: usize) -> Result<Self, FeatureError> {
        if dim == 0 {
            return Err(FeatureError::ZeroDim);
        }
        Ok(Self {
            label,
            dim,
            records: Vec::new(),
            by_name: HashMap::new(),
        })
    }

    pub fn insert(&mut self, record: FeatureVector) -> Result<(), FeatureError> {
        if record.values.len() != self.dim {
            return Err(FeatureError::DimMismatch {
                name: record.name,
                expected: self.dim,
                actual: record.values.len(),
            });
        }
        if let Some(position) = record.values.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite {
                name: record.name,
                position,
            });
        }
        if record.name.len() > usize::from(u16::MAX) {
            return Err(FeatureError::NameTooLong(record.name));
        }
        if self.by_name.contains_key(&record.name) {
            return Err(FeatureError::DuplicateName(record.name));
        }
        self.by_name.insert(record.name.clone(), self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn label(&self) -> StreamLabel {
        self.label
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[FeatureVector] {
        &self.records
    }

    pub fn get(&self, name: &str) -> Option<&FeatureVector> {
        self.by_name.get(name).map(|&i| &self.records[i])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let per_record: usize = self.records.iter().map(|r| 2 + r.name.len() + 4 * self.dim).sum();
        let mut out = Vec::with_capacity(HEADER_LEN + per_record);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.records.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for record in &self.records {
            out.extend_from_slice(&(record.name.len() as u16).to_le_bytes());
            out.extend_from_slice(record.name.as_bytes());
            for v in &record.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], label: StreamLabel) -> Result<Self, FeatureError> {
        let mut cursor = Cursor { bytes, offset: 0 };
        let magic = cursor.take(4, "magic")?;
        if magic != MAGIC {
            return Err(FeatureError::Format {
                offset: 0,
                reason: format!("bad magic {magic:?}"),
            });
        }
        let count = cursor.u32("record count")? as usize;
        let dim_offset = cursor.offset;
        let dim = cursor.u32("dimension")? as usize;
        if dim == 0 {
            return Err(FeatureError::Format {
                offset: dim_offset,
                reason: "dimension is zero".into(),
            });
        }
        let mut store = Self::new(label, dim)?;
        for _ in 0..count {
            let record_offset = cursor.offset;
            let name_len = usize::from(cursor.u16("name length")?);
            let name_bytes = cursor.take(name_len, "record name")?;
            let name = std::str::from_utf8(name_bytes)
                .map_err(|e| FeatureError::Format {
                    offset: record_offset + 2 + e.valid_up_to(),
                    reason: "record name is not UTF-8".into(),
                })?
                .to_owned();
            let values_offset = cursor.offset;
            let raw = cursor.take(4 * dim, "feature values")?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            if let Some(p) = values.iter().position(|v| !v.is_finite()) {
                return Err(FeatureError::Format {
                    offset: values_offset + 4 * p,
                    reason: format!("non-finite value in record {name:?}"),
                });
            }
            store.insert(FeatureVector { name, values }).map_err(|e| FeatureError::Format {
                offset: record_offset,
                reason: e.to_string(),
            })?;
        }
        if cursor.offset != bytes.len() {
            return Err(FeatureError::Format {
                offset: cursor.offset,
                reason: format!("{} trailing bytes after the last record", bytes.len() - cursor.offset),
            });
        }
        Ok(store)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], FeatureError> {
        let end = self.offset.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let slice = &self.bytes[self.offset..end];
                self.offset = end;
                Ok(slice)
            }
            None => Err(FeatureError::Format {
                offset: self.bytes.len(),
                reason: format!(
                    "truncated {what}: needed {n} bytes at offset {}, file has {}",
                    self.offset,
                    self.bytes.len()
                ),
            }),
        }
    }

    fn u16(&mut self, what: &str) -> Result<u16, FeatureError> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &str) -> Result<u32, FeatureError> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn write_feature_file(store: &FeatureStore, path: &Path) -> Result<(), FeatureError> {
    fs::write(path, store.to_bytes()).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_feature_file(path: &Path, label: StreamLabel) -> Result<FeatureStore, FeatureError> {
    let bytes = fs::read(path).map_err(|source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    FeatureStore::from_bytes(&bytes, label)
}

/// Grid-pooling extractor: the channel-averaged image is split into a
/// `g x g` grid with `g = ceil(sqrt(dim))` and the cell means are emitted
/// row-major, truncated to `dim` values.
pub fn extract_toy_features(img: &ImageTensor, name: &str, dim: usize) -> Result<FeatureVector, FeatureError> {
    if dim == 0 {
        return Err(FeatureError::ZeroDim);
    }
    if img.range() != ValueRange::UnitFloat {
        return Err(FeatureError::NotUnitRange);
    }
    let grid = (dim as f64).sqrt().ceil() as usize;
    let (h, w, c) = (img.height(), img.width(), img.channels());
    // Cell i spans [i*n/g, (i+1)*n/g), widened to one pixel when g > n.
    let span = |i: usize, n: usize| {
        let start = (i * n / grid).min(n.saturating_sub(1));
        let end = ((i + 1) * n / grid).max(start + 1).min(n);
        start..end
    };
    let data = img.data();
    let mut values = Vec::with_capacity(grid * grid);
    for gy in 0..grid {
        let rows = span(gy, h);
        for gx in 0..grid {
            let cols = span(gx, w);
            let mut sum = 0.0f64;
            for r in rows.clone() {
                for col in cols.clone() {
                    let px = &data[(r * w + col) * c..(r * w + col + 1) * c];
                    sum += px.iter().map(|&v| f64::from(v)).sum::<f64>();
                }
            }
            let n = (rows.len() * cols.len() * c) as f64;
            values.push(if n > 0.0 { (sum / n) as f32 } else { 0.0 });
        }
    }
    values.truncate(dim);
    Ok(FeatureVector {
        name: name.to_owned(),
        values,
    })
}
