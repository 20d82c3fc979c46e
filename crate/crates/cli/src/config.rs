use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use uucap_core::model::{AdamConfig, ArchitectureConfig, RnnKind, TrainingConfig};

/// Training and architecture settings read from a single JSON document.
///
/// Every key is optional; missing keys take the defaults below and unknown
/// keys are rejected. Feature dimensions and the vocabulary size are taken
/// from the data, not from the configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub split_fraction: f64,
    pub batch_size: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub restore_best: bool,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub dropout_rate: f64,
    pub rnn_kind: RnnKind,
    pub bidirectional: bool,
    pub proj_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub head_dim: usize,
    pub max_len: usize,
    pub manifest: Option<PathBuf>,
    pub feat_a: Option<PathBuf>,
    pub feat_b: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let arch = ArchitectureConfig::default();
        let train = TrainingConfig::default();
        Self {
            seed: train.seed,
            split_fraction: train.split_fraction,
            batch_size: train.batch_size,
            patience: train.patience,
            max_epochs: train.max_epochs,
            restore_best: train.restore_best,
            lr: train.adam.lr,
            beta1: train.adam.beta1,
            beta2: train.adam.beta2,
            epsilon: train.adam.epsilon,
            dropout_rate: arch.dropout_rate,
            rnn_kind: arch.rnn_kind,
            bidirectional: arch.bidirectional,
            proj_dim: arch.proj_dim,
            embed_dim: arch.embed_dim,
            hidden: arch.hidden,
            head_dim: arch.head_dim,
            max_len: arch.max_len,
            manifest: None,
            feat_a: None,
            feat_b: None,
            model: None,
            history: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn training(&self) -> TrainingConfig {
        TrainingConfig {
            batch_size: self.batch_size,
            adam: AdamConfig {
                lr: self.lr,
                beta1: self.beta1,
                beta2: self.beta2,
                epsilon: self.epsilon,
            },
            max_epochs: self.max_epochs,
            patience: self.patience,
            split_fraction: self.split_fraction,
            seed: self.seed,
            restore_best: self.restore_best,
        }
    }

    /// Architecture for the given data shapes.
    pub fn architecture(&self, dim_a: usize, dim_b: usize, vocab_size: usize) -> ArchitectureConfig {
        ArchitectureConfig {
            dim_a,
            dim_b,
            proj_dim: self.proj_dim,
            embed_dim: self.embed_dim,
            hidden: self.hidden,
            rnn_kind: self.rnn_kind,
            bidirectional: self.bidirectional,
            dropout_rate: self.dropout_rate,
            head_dim: self.head_dim,
            vocab_size,
            max_len: self.max_len,
        }
    }
}
