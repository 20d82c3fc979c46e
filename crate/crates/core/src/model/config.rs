use serde::{Deserialize, Serialize};

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RnnKind {
    Gru,
    Lstm,
}

impl RnnKind {
    /// Number of stacked gate blocks in the cell's weight matrices.
    pub fn gates(self) -> usize {
        match self {
            RnnKind::Gru => 3,
            RnnKind::Lstm => 4,
        }
    }
}

/// Shapes and switches of the merge captioner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchitectureConfig {
    pub dim_a: usize,
    pub dim_b: usize,
    pub proj_dim: usize,
    pub embed_dim: usize,
    pub hidden: usize,
    pub rnn_kind: RnnKind,
    pub bidirectional: bool,
    pub dropout_rate: f64,
    pub head_dim: usize,
    /// Number of output classes, padding included.
    pub vocab_size: usize,
    pub max_len: usize,
}

impl Default for ArchitectureConfig {
    fn default() -> Self {
        Self {
            dim_a: 1920,
            dim_b: 4800,
            proj_dim: 256,
            embed_dim: 256,
            hidden: 128,
            rnn_kind: RnnKind::Gru,
            bidirectional: true,
            dropout_rate: 0.5,
            head_dim: 128,
            vocab_size: 626,
            max_len: 54,
        }
    }
}

impl ArchitectureConfig {
    pub fn directions(&self) -> usize {
        if self.bidirectional {
            2
        } else {
            1
        }
    }

    /// Width of the recurrent summary fed to the head.
    pub fn fused_dim(&self) -> usize {
        self.directions() * self.hidden
    }

    /// `BiGRU`, `UniLSTM`, ...
    pub fn label(&self) -> String {
        let dir = if self.bidirectional { "Bi" } else { "Uni" };
        let kind = match self.rnn_kind {
            RnnKind::Gru => "GRU",
            RnnKind::Lstm => "LSTM",
        };
        format!("{dir}{kind}")
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.vocab_size < 4 {
            return bad(format!(
                "vocab_size {} cannot hold padding, <START>, <END> and <UNK>",
                self.vocab_size
            ));
        }
        if self.proj_dim != self.embed_dim {
            return bad(format!(
                "proj_dim ({}) must equal embed_dim ({}) for time-axis fusion",
                self.proj_dim, self.embed_dim
            ));
        }
        for (name, v) in [
            ("dim_a", self.dim_a),
            ("dim_b", self.dim_b),
            ("proj_dim", self.proj_dim),
            ("hidden", self.hidden),
            ("head_dim", self.head_dim),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.max_len < 2 {
            return bad(format!("max_len must be at least 2, got {}", self.max_len));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate must lie in [0, 1), got {}", self.dropout_rate));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub max_epochs: usize,
    pub patience: usize,
    /// Fraction of images used for training; the rest validate.
    pub split_fraction: f64,
    pub seed: u64,
    pub restore_best: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            batch_size: 16,
            adam: AdamConfig::default(),
            max_epochs: 100,
            patience: 10,
            split_fraction: 0.85,
            seed: 0,
            restore_best: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::InvalidConfig(msg));
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad(format!("split_fraction must lie in (0, 1), got {}", self.split_fraction));
        }
        if self.patience == 0 {
            return bad("patience must be at least 1".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return bad(format!("invalid Adam hyperparameters {a:?}"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_reference_shapes() {
        let a = ArchitectureConfig::default();
        assert_eq!((a.dim_a, a.dim_b, a.proj_dim, a.hidden, a.head_dim), (1920, 4800, 256, 128, 128));
        assert_eq!(a.fused_dim(), 256);
        assert_eq!(a.label(), "BiGRU");
        a.validate().unwrap();

        let t = TrainingConfig::default();
        assert_eq!((t.batch_size, t.patience, t.split_fraction), (16, 10, 0.85));
        t.validate().unwrap();
    }

    #[test]
    fn rejects_inconsistent_configs() {
        let small_vocab = ArchitectureConfig {
            vocab_size: 3,
            ..Default::default()
        };
        assert!(small_vocab.validate().is_err());
        let mismatch = ArchitectureConfig {
            embed_dim: 128,
            ..Default::default()
        };
        assert!(mismatch.validate().is_err());
        let split = TrainingConfig {
            split_fraction: 1.0,
            ..Default::default()
        };
        assert!(split.validate().is_err());
        let patience = TrainingConfig {
            patience: 0,
            ..Default::default()
        };
        assert!(patience.validate().is_err());
    }
}
