//! Prefix expansion, the seeded train/validation split and the early-stopped
//! training loop.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::config::{ArchitectureConfig, TrainingConfig};
use super::network::{backward_into, batch_loss, Mode, Sample};
use super::params::CaptionerParams;
use super::ModelError;
use crate::text::{TokenSequence, PAD_INDEX};

/// One next-word example: the first `prefix_len` tokens predict `target`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingPair {
    /// Zero-padded to the caption's sequence length.
    pub prefix: Vec<usize>,
    pub target: usize,
}

/// Expands an encoded caption into `(prefix, next token)` pairs for every
/// position `t` in `1..true_length`.
pub fn expand_training_pairs(encoded: &TokenSequence) -> Result<Vec<TrainingPair>, ModelError> {
    let len = encoded.true_length;
    if len < 2 {
        return Err(ModelError::CaptionTooShort(len));
    }
    Ok((1..len)
        .map(|t| {
            let mut prefix = encoded.indices[..t].to_vec();
            prefix.resize(encoded.indices.len(), PAD_INDEX);
            TrainingPair {
                prefix,
                target: encoded.indices[t],
            }
        })
        .collect())
}

/// Derives an independent seed for one consumer of the run seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.random()
}

const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;

/// Seeded permutation of `0..n` cut into `(train, validation)` index sets.
/// The training share is `round(fraction * n)` clamped so both sides are
/// non-empty.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>), ModelError> {
    if n < 2 {
        return Err(ModelError::EmptySplit(format!("{n} examples cannot be split")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, SPLIT_STREAM)));
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
    let val = order.split_off(n_train);
    Ok((order, val))
}

/// One image with its encoded caption.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub name: String,
    pub feat_a: Vec<f32>,
    pub feat_b: Vec<f32>,
    pub caption: TokenSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
}

struct Expanded {
    example: usize,
    pair: TrainingPair,
}

fn expand_all(examples: &[Example]) -> Result<Vec<Expanded>, ModelError> {
    let mut out = Vec::new();
    for (example, ex) in examples.iter().enumerate() {
        for pair in expand_training_pairs(&ex.caption)? {
            out.push(Expanded { example, pair });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochLoss>,
    /// 1-based epoch after which training ended.
    pub stopped_epoch: usize,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stop_reason: StopReason,
}

/// Hook into the training loop, mainly for tests and progress reporting.
pub trait EpochObserver {
    /// Receives the measured validation loss and returns the value the
    /// early-stopping rule should see.
    fn validation_loss(&mut self, _epoch: usize, measured: f64, _params: &CaptionerParams<f32>) -> f64 {
        measured
    }

    fn epoch_end(&mut self, _loss: &EpochLoss) {}
}

/// Observer that changes nothing.
pub struct NoObserver;

impl EpochObserver for NoObserver {}

/// Early-stopping bookkeeping, independent of the model.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
        }
    }

    /// Records an epoch's validation loss. Returns `(improved, stop)`.
    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> (bool, bool) {
        if val_loss < self.best {
            self.best = val_loss;
            self.best_epoch = epoch;
            (true, false)
        } else {
            (false, epoch - self.best_epoch >= self.patience)
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

fn samples<'a>(examples: &'a [Example], pairs: &'a [Expanded], mode: impl Fn(usize) -> Mode) -> Vec<Sample<'a, f32>> {
    pairs
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let ex = &examples[e.example];
            Sample {
                feat_a: &ex.feat_a,
                feat_b: &ex.feat_b,
                prefix: &e.pair.prefix,
                target: e.pair.target,
                mode: mode(i),
            }
        })
        .collect()
}

/// Trains with [`NoObserver`].
pub fn train(
    data: &TrainingData,
    arch: &ArchitectureConfig,
    cfg: &TrainingConfig,
) -> Result<(CaptionerParams<f32>, TrainingHistory), ModelError> {
    train_with_observer(data, arch, cfg, &mut NoObserver)
}

/// Minibatch Adam over expanded prefix pairs with early stopping on the
/// validation loss.
///
/// Each epoch reshuffles the training pairs with a seeded generator and
/// draws one dropout seed per pair, so a run is a pure function of the data
/// and configuration. The reported training loss is the mean over all pairs
/// of the loss seen during the epoch (dropout active); validation loss runs
/// with dropout off.
pub fn train_with_observer(
    data: &TrainingData,
    arch: &ArchitectureConfig,
    cfg: &TrainingConfig,
    observer: &mut dyn EpochObserver,
) -> Result<(CaptionerParams<f32>, TrainingHistory), ModelError> {
    cfg.validate()?;
    arch.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(ModelError::EmptySplit(format!(
            "{} training and {} validation examples",
            data.train.len(),
            data.val.len()
        )));
    }
    let train_pairs = expand_all(&data.train)?;
    let val_pairs = expand_all(&data.val)?;
    let val_samples = samples(&data.val, &val_pairs, |_| Mode::Infer);

    let mut params = CaptionerParams::<f32>::init(arch, derive_seed(cfg.seed, INIT_STREAM))?;
    let mut grads = params.zeros_like();
    let mut adam = AdamState::for_params(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, SHUFFLE_STREAM));
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut epochs = Vec::new();
    let mut stop_reason = StopReason::MaxEpochs;

    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_pairs.len()).collect();
        order.shuffle(&mut rng);
        let dropout_seeds: Vec<u64> = (0..order.len()).map(|_| rng.random()).collect();
        let shuffled: Vec<&Expanded> = order.iter().map(|&i| &train_pairs[i]).collect();

        let mut loss_sum = 0.0;
        for (chunk_index, chunk) in shuffled.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<Sample<'_, f32>> = chunk
                .iter()
                .enumerate()
                .map(|(j, e)| {
                    let ex = &data.train[e.example];
                    Sample {
                        feat_a: &ex.feat_a,
                        feat_b: &ex.feat_b,
                        prefix: &e.pair.prefix,
                        target: e.pair.target,
                        mode: Mode::Train {
                            dropout_seed: dropout_seeds[chunk_index * cfg.batch_size + j],
                        },
                    }
                })
                .collect();
            let batch_mean = backward_into(&params, &batch, &mut grads)?;
            loss_sum += batch_mean * batch.len() as f64;
            adam_step(&mut params, &grads, &mut adam, &cfg.adam)?;
        }
        let train_loss = loss_sum / train_pairs.len() as f64;
        let measured = batch_loss(&params, &val_samples)?;
        let val_loss = observer.validation_loss(epoch, measured, &params);

        let record = EpochLoss {
            epoch,
            train_loss,
            val_loss,
        };
        observer.epoch_end(&record);
        log::info!("epoch {epoch}: train_loss={train_loss:.5} val_loss={val_loss:.5}");
        epochs.push(record);

        let (improved, stop) = stopper.observe(epoch, val_loss);
        if improved && cfg.restore_best {
            best_params.clone_from(&params);
        }
        if stop {
            stop_reason = StopReason::Patience;
            break;
        }
    }

    let stopped_epoch = epochs.len();
    if cfg.restore_best {
        params = best_params;
    }
    Ok((
        params,
        TrainingHistory {
            epochs,
            stopped_epoch,
            best_epoch: stopper.best_epoch(),
            best_val_loss: stopper.best(),
            stop_reason,
        },
    ))
}

/// Mean next-word loss over examples with dropout off.
pub fn evaluate_loss(params: &CaptionerParams<f32>, examples: &[Example]) -> Result<f64, ModelError> {
    let pairs = expand_all(examples)?;
    batch_loss(params, &samples(examples, &pairs, |_| Mode::Infer))
}
