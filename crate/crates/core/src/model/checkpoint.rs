//! Self-describing model checkpoint.
//!
//! Layout (little-endian): `b"UCM1"`, `u32` metadata length, UTF-8 JSON
//! metadata, then every tensor's `f32` values in canonical order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ArchitectureConfig;
use super::params::CaptionerParams;
use super::ModelError;
use crate::text::{Vocabulary, VocabularyFile};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"UCM1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub architecture: ArchitectureConfig,
    pub vocabulary: VocabularyFile,
    pub seed: u64,
    pub best_epoch: usize,
    pub tensors: Vec<TensorEntry>,
}

/// Trained weights together with everything needed to caption.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: CaptionerParams<f32>,
    pub vocabulary: Vocabulary,
    pub seed: u64,
    pub best_epoch: usize,
}

fn format_err(offset: usize, reason: impl Into<String>) -> ModelError {
    ModelError::Checkpoint {
        offset,
        reason: reason.into(),
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>, ModelError> {
        let tensors = self.params.tensors();
        let meta = CheckpointMeta {
            architecture: self.params.config.clone(),
            vocabulary: self.vocabulary.to_file_repr(),
            seed: self.seed,
            best_epoch: self.best_epoch,
            tensors: tensors
                .iter()
                .map(|(name, t)| TensorEntry {
                    name: name.clone(),
                    rows: t.rows,
                    cols: t.cols,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&meta)?;
        let meta_len = u32::try_from(json.len()).map_err(|_| format_err(4, "metadata too large"))?;
        let mut out = Vec::with_capacity(8 + json.len() + 4 * self.params.num_parameters());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&meta_len.to_le_bytes());
        out.extend_from_slice(&json);
        for (_, t) in tensors {
            for v in &t.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ModelError> {
        if bytes.len() < 8 {
            return Err(format_err(bytes.len(), "truncated header"));
        }
        if &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(format_err(0, "bad magic"));
        }
        let meta_len = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
        let payload_start = 8 + meta_len;
        if bytes.len() < payload_start {
            return Err(format_err(bytes.len(), "truncated metadata"));
        }
        let meta: CheckpointMeta =
            serde_json::from_slice(&bytes[8..payload_start]).map_err(|e| format_err(8, format!("metadata: {e}")))?;
        let vocabulary = Vocabulary::from_file_repr(meta.vocabulary)?;
        if vocabulary.size() + 1 != meta.architecture.vocab_size {
            return Err(ModelError::VocabularyMismatch {
                vocabulary: vocabulary.size() + 1,
                model: meta.architecture.vocab_size,
            });
        }
        let mut params = CaptionerParams::<f32>::zeros(&meta.architecture)?;
        let mut offset = payload_start;
        {
            let slots = params.tensors_mut();
            if slots.len() != meta.tensors.len() {
                return Err(format_err(8, "tensor manifest does not match architecture"));
            }
            for ((name, tensor), entry) in slots.into_iter().zip(&meta.tensors) {
                if name != entry.name || tensor.rows != entry.rows || tensor.cols != entry.cols {
                    return Err(format_err(
                        8,
                        format!("tensor {} does not match expected {name} {}x{}", entry.name, tensor.rows, tensor.cols),
                    ));
                }
                let end = offset + 4 * tensor.len();
                if bytes.len() < end {
                    return Err(format_err(bytes.len(), format!("truncated tensor {name}")));
                }
                for (v, chunk) in tensor.data.iter_mut().zip(bytes[offset..end].chunks_exact(4)) {
                    *v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                }
                offset = end;
            }
        }
        if offset != bytes.len() {
            return Err(format_err(offset, "trailing bytes"));
        }
        if !params.is_finite() {
            return Err(format_err(payload_start, "non-finite weight"));
        }
        Ok(Self {
            params,
            vocabulary,
            seed: meta.seed,
            best_epoch: meta.best_epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RnnKind;

    fn sample(kind: RnnKind, bidirectional: bool) -> Checkpoint {
        let vocabulary = Vocabulary::build(&["<START> small bright ring <END>"]).unwrap();
        let cfg = ArchitectureConfig {
            dim_a: 5,
            dim_b: 3,
            proj_dim: 3,
            embed_dim: 3,
            hidden: 2,
            head_dim: 4,
            rnn_kind: kind,
            bidirectional,
            vocab_size: vocabulary.size() + 1,
            max_len: 6,
            ..Default::default()
        };
        Checkpoint {
            params: CaptionerParams::init(&cfg, 11).unwrap(),
            vocabulary,
            seed: 11,
            best_epoch: 4,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for kind in [RnnKind::Gru, RnnKind::Lstm] {
            for bi in [false, true] {
                let ck = sample(kind, bi);
                let bytes = ck.to_bytes().unwrap();
                let back = Checkpoint::from_bytes(&bytes).unwrap();
                assert_eq!(back, ck);
                assert_eq!(back.to_bytes().unwrap(), bytes);
            }
        }
    }

    #[test]
    fn payload_is_f32_le_in_canonical_order() {
        let ck = sample(RnnKind::Gru, true);
        let bytes = ck.to_bytes().unwrap();
        let meta_len = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let first = &ck.params.proj_a_w.data[0];
        assert_eq!(&bytes[8 + meta_len..12 + meta_len], &first.to_le_bytes());
        let last = ck.params.out_b.data.last().unwrap();
        assert_eq!(&bytes[bytes.len() - 4..], &last.to_le_bytes());
        assert_eq!(bytes.len(), 8 + meta_len + 4 * ck.params.num_parameters());
    }

    #[test]
    fn rejects_corruption() {
        let bytes = sample(RnnKind::Lstm, false).to_bytes().unwrap();
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(Checkpoint::from_bytes(&bad), Err(ModelError::Checkpoint { offset: 0, .. })));
        let cut = &bytes[..bytes.len() - 1];
        assert!(matches!(Checkpoint::from_bytes(cut), Err(ModelError::Checkpoint { .. })));
        let mut long = bytes.clone();
        long.push(0);
        assert!(matches!(Checkpoint::from_bytes(&long), Err(ModelError::Checkpoint { .. })));
        assert!(Checkpoint::from_bytes(&bytes[..6]).is_err());
        let mut nan = bytes.clone();
        let n = nan.len();
        nan[n - 4..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(Checkpoint::from_bytes(&nan).is_err());
    }
}
