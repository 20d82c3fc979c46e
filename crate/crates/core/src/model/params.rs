use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::ArchitectureConfig;
use super::tensor::{Real, Tensor};
use super::ModelError;

/// Weights of one recurrent direction. Gate blocks are stacked row-wise:
/// GRU `[update, reset, candidate]`, LSTM `[input, forget, cell, output]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentParams<T> {
    /// `gates*hidden x embed_dim`
    pub w_input: Tensor<T>,
    /// `gates*hidden x hidden`
    pub w_hidden: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> RecurrentParams<T> {
    fn zeros(cfg: &ArchitectureConfig) -> Self {
        let rows = cfg.rnn_kind.gates() * cfg.hidden;
        Self {
            w_input: Tensor::zeros(rows, cfg.embed_dim),
            w_hidden: Tensor::zeros(rows, cfg.hidden),
            bias: Tensor::vector(rows),
        }
    }
}

/// Every trainable tensor of the captioner.
///
/// The same type doubles as the gradient container: gradients have exactly
/// the parameter shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionerParams<T> {
    pub config: ArchitectureConfig,
    pub proj_a_w: Tensor<T>,
    pub proj_a_b: Tensor<T>,
    pub proj_b_w: Tensor<T>,
    pub proj_b_b: Tensor<T>,
    /// `vocab_size x embed_dim`; row 0 is the padding row and stays zero.
    pub embedding: Tensor<T>,
    pub forward: RecurrentParams<T>,
    pub backward: Option<RecurrentParams<T>>,
    pub head_w: Tensor<T>,
    pub head_b: Tensor<T>,
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl<T: Real> CaptionerParams<T> {
    /// All-zero tensors shaped for `cfg`.
    pub fn zeros(cfg: &ArchitectureConfig) -> Result<Self, ModelError> {
        cfg.validate()?;
        Ok(Self {
            config: cfg.clone(),
            proj_a_w: Tensor::zeros(cfg.proj_dim, cfg.dim_a),
            proj_a_b: Tensor::vector(cfg.proj_dim),
            proj_b_w: Tensor::zeros(cfg.proj_dim, cfg.dim_b),
            proj_b_b: Tensor::vector(cfg.proj_dim),
            embedding: Tensor::zeros(cfg.vocab_size, cfg.embed_dim),
            forward: RecurrentParams::zeros(cfg),
            backward: cfg.bidirectional.then(|| RecurrentParams::zeros(cfg)),
            head_w: Tensor::zeros(cfg.head_dim, cfg.fused_dim()),
            head_b: Tensor::vector(cfg.head_dim),
            out_w: Tensor::zeros(cfg.vocab_size, cfg.head_dim),
            out_b: Tensor::vector(cfg.vocab_size),
        })
    }

    /// Glorot-uniform weights from a seeded ChaCha stream, zero biases, zero
    /// padding row. Tensors are filled in [`Self::tensors`] order.
    pub fn init(cfg: &ArchitectureConfig, seed: u64) -> Result<Self, ModelError> {
        let mut params = Self::zeros(cfg)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (name, tensor) in params.tensors_mut() {
            if is_bias(&name) {
                continue;
            }
            let limit = (6.0 / (tensor.rows + tensor.cols) as f64).sqrt();
            for v in tensor.data.iter_mut() {
                *v = T::lit(rng.random_range(-limit..limit));
            }
        }
        params.embedding.row_mut(0).fill(T::zero());
        Ok(params)
    }

    /// Tensors in the canonical order used by initialization, Adam state and
    /// the checkpoint payload.
    pub fn tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out: Vec<(String, &Tensor<T>)> = vec![
            ("proj_a.weight".into(), &self.proj_a_w),
            ("proj_a.bias".into(), &self.proj_a_b),
            ("proj_b.weight".into(), &self.proj_b_w),
            ("proj_b.bias".into(), &self.proj_b_b),
            ("embedding".into(), &self.embedding),
        ];
        for (dir, cell) in [("forward", Some(&self.forward)), ("backward", self.backward.as_ref())] {
            if let Some(cell) = cell {
                out.push((format!("rnn.{dir}.w_input"), &cell.w_input));
                out.push((format!("rnn.{dir}.w_hidden"), &cell.w_hidden));
                out.push((format!("rnn.{dir}.bias"), &cell.bias));
            }
        }
        out.extend([
            ("head.weight".into(), &self.head_w),
            ("head.bias".into(), &self.head_b),
            ("output.weight".into(), &self.out_w),
            ("output.bias".into(), &self.out_b),
        ]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<T>)> {
        let mut out: Vec<(String, &mut Tensor<T>)> = vec![
            ("proj_a.weight".into(), &mut self.proj_a_w),
            ("proj_a.bias".into(), &mut self.proj_a_b),
            ("proj_b.weight".into(), &mut self.proj_b_w),
            ("proj_b.bias".into(), &mut self.proj_b_b),
            ("embedding".into(), &mut self.embedding),
        ];
        for (dir, cell) in [("forward", Some(&mut self.forward)), ("backward", self.backward.as_mut())] {
            if let Some(cell) = cell {
                out.push((format!("rnn.{dir}.w_input"), &mut cell.w_input));
                out.push((format!("rnn.{dir}.w_hidden"), &mut cell.w_hidden));
                out.push((format!("rnn.{dir}.bias"), &mut cell.bias));
            }
        }
        out.extend([
            ("head.weight".into(), &mut self.head_w),
            ("head.bias".into(), &mut self.head_b),
            ("output.weight".into(), &mut self.out_w),
            ("output.bias".into(), &mut self.out_b),
        ]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.config).expect("config already validated")
    }

    pub fn fill_zero(&mut self) {
        for (_, t) in self.tensors_mut() {
            t.fill_zero();
        }
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: T) {
        let theirs = other.tensors();
        for ((_, mine), (_, theirs)) in self.tensors_mut().into_iter().zip(theirs) {
            for (a, &b) in mine.data.iter_mut().zip(&theirs.data) {
                *a += scale * b;
            }
        }
    }

    pub fn cast<U: Real>(&self) -> CaptionerParams<U> {
        CaptionerParams {
            config: self.config.clone(),
            proj_a_w: self.proj_a_w.cast(),
            proj_a_b: self.proj_a_b.cast(),
            proj_b_w: self.proj_b_w.cast(),
            proj_b_b: self.proj_b_b.cast(),
            embedding: self.embedding.cast(),
            forward: RecurrentParams {
                w_input: self.forward.w_input.cast(),
                w_hidden: self.forward.w_hidden.cast(),
                bias: self.forward.bias.cast(),
            },
            backward: self.backward.as_ref().map(|c| RecurrentParams {
                w_input: c.w_input.cast(),
                w_hidden: c.w_hidden.cast(),
                bias: c.bias.cast(),
            }),
            head_w: self.head_w.cast(),
            head_b: self.head_b.cast(),
            out_w: self.out_w.cast(),
            out_b: self.out_b.cast(),
        }
    }
}

fn is_bias(name: &str) -> bool {
    name.ends_with("bias")
}
