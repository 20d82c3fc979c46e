//! Dual-stream merge captioner: projections of both feature vectors and the
//! embedded caption prefix run through a (bi)directional GRU or LSTM, then a
//! ReLU head and a softmax over the vocabulary.

mod adam;
mod checkpoint;
mod config;
mod decode;
mod gradcheck;
mod network;
mod params;
mod recurrent;
mod tensor;
mod train;

pub use adam::{adam_step, adam_update, AdamState};
pub use checkpoint::{Checkpoint, CheckpointMeta, TensorEntry, CHECKPOINT_MAGIC};
pub use config::{AdamConfig, ArchitectureConfig, RnnKind, TrainingConfig};
pub use decode::{argmax_non_padding, greedy_caption, GeneratedCaption};
pub use gradcheck::{gradient_check, TensorCheck};
pub use network::{backward, backward_into, batch_loss, forward, loss, softmax, Mode, Sample};
pub use params::{CaptionerParams, RecurrentParams};
pub use tensor::{Real, Tensor};
pub use train::{
    derive_seed, evaluate_loss, expand_training_pairs, split_indices, train, train_with_observer, EarlyStopping,
    EpochLoss, EpochObserver, Example, NoObserver, StopReason, TrainingData, TrainingHistory, TrainingPair,
};

use crate::text::TextError;

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stream {stream} features have dimension {actual}, expected {expected}")]
    FeatureDim {
        stream: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid prefix: {0}")]
    InvalidPrefix(String),
    #[error("token {token} outside vocabulary of size {vocab_size}")]
    TokenOutOfRange { token: usize, vocab_size: usize },
    #[error("the padding index cannot be a target")]
    PaddingTarget,
    #[error("empty batch")]
    EmptyBatch,
    #[error("non-finite gradient in {tensor} at index {index}")]
    NonFiniteGradient { tensor: String, index: usize },
    #[error("cannot split data: {0}")]
    EmptySplit(String),
    #[error("caption of {0} tokens has no next-word pairs")]
    CaptionTooShort(usize),
    #[error("vocabulary implies {vocabulary} output classes but the model has {model}")]
    VocabularyMismatch { vocabulary: usize, model: usize },
    #[error("malformed checkpoint at byte {offset}: {reason}")]
    Checkpoint { offset: usize, reason: String },
    #[error(transparent)]
    Text(#[from] TextError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
