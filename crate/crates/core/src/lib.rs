//! Ultrasound image captioning pipeline.
//!
//! The crate is organised along the stages of the pipeline:
//!
//! 1. [`roi_crop`] - grayscale conversion, intensity-profile region-of-interest
//!    detection, cropping and standardization to a 224x224 unit-range tensor.
//! 2. [`text`] - caption normalization, start/end tagging, vocabulary
//!    construction and fixed-length padded encoding.
//! 3. [`features`] - per-image feature vectors, the `UFV1` binary feature file
//!    format and a grid-pooling extractor used when no pretrained backbone is
//!    available.
//! 4. [`model`] - the merge captioner (two feature projections, token
//!    embedding, time-axis fusion, GRU/LSTM encoder in one or both directions,
//!    dense head), its hand-written backward pass, Adam, the early-stopped
//!    training loop, greedy decoding and the `UCM1` checkpoint format.
//! 5. [`metrics`] - BLEU-1..4 and ROUGE-1/2/L.

pub mod features;
pub mod metrics;
pub mod model;
pub mod roi_crop;
pub mod text;

pub use features::{FeatureStore, FeatureVector, StreamLabel};
pub use metrics::{evaluate_corpus, MetricReport};
pub use model::{ArchitectureConfig, CaptionerParams, RnnKind, TrainingConfig, TrainingHistory};
pub use roi_crop::{CropAxis, CropBox, ImageTensor, ValueRange};
pub use text::{TokenSequence, Vocabulary};
