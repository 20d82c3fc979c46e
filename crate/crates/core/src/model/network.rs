//! Forward and backward passes of the merge captioner.
//!
//! ```text
//! pA = relu(WA fA + bA)          pB = relu(WB fB + bB)
//! sequence = [pA, pB, E[t1], ..., E[tL]]       (padding skipped)
//! fused    = [h_forward_final, h_backward_final]
//! hidden   = relu(W1 dropout(fused) + b1)
//! probs    = softmax(Wo dropout(hidden) + bo)
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::CaptionerParams;
use super::recurrent::{backprop_direction, run_direction, DirectionTrace};
use super::tensor::{add_outer_rows, affine, matvec_t_rows_acc, relu, Real};
use super::ModelError;
use crate::text::PAD_INDEX;

/// Dropout behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Inverted dropout with masks drawn from `dropout_seed`.
    Train { dropout_seed: u64 },
    /// Dropout is the identity.
    Infer,
}

/// One next-word prediction example.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a, T> {
    pub feat_a: &'a [T],
    pub feat_b: &'a [T],
    /// Zero-padded token prefix.
    pub prefix: &'a [usize],
    pub target: usize,
    pub mode: Mode,
}

struct ForwardCache<T> {
    pa_pre: Vec<T>,
    pb_pre: Vec<T>,
    tokens: Vec<usize>,
    inputs: Vec<Vec<T>>,
    forward: DirectionTrace<T>,
    backward: Option<DirectionTrace<T>>,
    mask_fused: Option<Vec<T>>,
    fused_drop: Vec<T>,
    head_pre: Vec<T>,
    mask_head: Option<Vec<T>>,
    head_drop: Vec<T>,
    probs: Vec<f64>,
}

fn dropout_masks<T: Real>(rate: f64, seed: u64, fused: usize, head: usize) -> (Vec<T>, Vec<T>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let keep = T::lit(1.0 / (1.0 - rate));
    let mut draw = |n: usize| -> Vec<T> {
        (0..n)
            .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
            .collect()
    };
    let a = draw(fused);
    let b = draw(head);
    (a, b)
}

fn apply_mask<T: Real>(x: &[T], mask: Option<&Vec<T>>) -> Vec<T> {
    match mask {
        Some(m) => x.iter().zip(m).map(|(&v, &k)| v * k).collect(),
        None => x.to_vec(),
    }
}

/// Numerically stable softmax, evaluated in `f64`.
pub fn softmax<T: Real>(logits: &[T]) -> Vec<f64> {
    let as_f64: Vec<f64> = logits.iter().map(|v| v.to_f64().expect("finite")).collect();
    let max = as_f64.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = as_f64.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Categorical cross-entropy `-ln(prob[target])`.
pub fn loss(prob: &[f64], target: usize) -> Result<f64, ModelError> {
    if target == PAD_INDEX {
        return Err(ModelError::PaddingTarget);
    }
    let p = prob.get(target).ok_or(ModelError::TokenOutOfRange {
        token: target,
        vocab_size: prob.len(),
    })?;
    Ok(-p.ln())
}

/// Non-padding tokens of a prefix, checking that padding only appears as a
/// suffix and that every index fits the vocabulary.
fn prefix_tokens<T: Real>(params: &CaptionerParams<T>, prefix: &[usize]) -> Result<Vec<usize>, ModelError> {
    let cfg = &params.config;
    let len = prefix.iter().position(|&t| t == PAD_INDEX).unwrap_or(prefix.len());
    if prefix[len..].iter().any(|&t| t != PAD_INDEX) {
        return Err(ModelError::InvalidPrefix("padding must only appear as a suffix".into()));
    }
    if len > cfg.max_len {
        return Err(ModelError::InvalidPrefix(format!(
            "prefix holds {len} tokens, max_len is {}",
            cfg.max_len
        )));
    }
    if let Some(&token) = prefix[..len].iter().find(|&&t| t >= cfg.vocab_size) {
        return Err(ModelError::TokenOutOfRange {
            token,
            vocab_size: cfg.vocab_size,
        });
    }
    Ok(prefix[..len].to_vec())
}

fn check_features<T: Real>(params: &CaptionerParams<T>, feat_a: &[T], feat_b: &[T]) -> Result<(), ModelError> {
    let cfg = &params.config;
    for (stream, expected, actual) in [("A", cfg.dim_a, feat_a.len()), ("B", cfg.dim_b, feat_b.len())] {
        if expected != actual {
            return Err(ModelError::FeatureDim {
                stream,
                expected,
                actual,
            });
        }
    }
    Ok(())
}

fn forward_cached<T: Real>(
    params: &CaptionerParams<T>,
    feat_a: &[T],
    feat_b: &[T],
    prefix: &[usize],
    mode: Mode,
) -> Result<ForwardCache<T>, ModelError> {
    check_features(params, feat_a, feat_b)?;
    let tokens = prefix_tokens(params, prefix)?;
    let cfg = &params.config;

    let pa_pre = affine(&params.proj_a_w, &params.proj_a_b, feat_a);
    let pb_pre = affine(&params.proj_b_w, &params.proj_b_b, feat_b);
    let mut inputs = Vec::with_capacity(tokens.len() + 2);
    inputs.push(pa_pre.iter().map(|&v| relu(v)).collect::<Vec<T>>());
    inputs.push(pb_pre.iter().map(|&v| relu(v)).collect::<Vec<T>>());
    for &t in &tokens {
        inputs.push(params.embedding.row(t).to_vec());
    }

    let forward = run_direction(&params.forward, cfg.rnn_kind, &inputs, false);
    let backward = params
        .backward
        .as_ref()
        .map(|cell| run_direction(cell, cfg.rnn_kind, &inputs, true));
    let mut fused = forward.final_h.clone();
    if let Some(b) = &backward {
        fused.extend_from_slice(&b.final_h);
    }

    let (mask_fused, mask_head) = match mode {
        Mode::Train { dropout_seed } if cfg.dropout_rate > 0.0 => {
            let (a, b) = dropout_masks(cfg.dropout_rate, dropout_seed, fused.len(), cfg.head_dim);
            (Some(a), Some(b))
        }
        _ => (None, None),
    };
    let fused_drop = apply_mask(&fused, mask_fused.as_ref());
    let head_pre = affine(&params.head_w, &params.head_b, &fused_drop);
    let head: Vec<T> = head_pre.iter().map(|&v| relu(v)).collect();
    let head_drop = apply_mask(&head, mask_head.as_ref());
    let logits = affine(&params.out_w, &params.out_b, &head_drop);
    let probs = softmax(&logits);

    Ok(ForwardCache {
        pa_pre,
        pb_pre,
        tokens,
        inputs,
        forward,
        backward,
        mask_fused,
        fused_drop,
        head_pre,
        mask_head,
        head_drop,
        probs,
    })
}

/// Probability distribution over the vocabulary for the next token.
pub fn forward<T: Real>(
    params: &CaptionerParams<T>,
    feat_a: &[T],
    feat_b: &[T],
    prefix: &[usize],
    mode: Mode,
) -> Result<Vec<f64>, ModelError> {
    Ok(forward_cached(params, feat_a, feat_b, prefix, mode)?.probs)
}

/// Mean cross-entropy of a batch.
pub fn batch_loss<T: Real>(params: &CaptionerParams<T>, batch: &[Sample<'_, T>]) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        let probs = forward(params, s.feat_a, s.feat_b, s.prefix, s.mode)?;
        total += loss(&probs, s.target)?;
    }
    Ok(total / batch.len() as f64)
}

fn mask_grad<T: Real>(d: &mut [T], mask: Option<&Vec<T>>) {
    if let Some(m) = mask {
        for (v, &k) in d.iter_mut().zip(m) {
            *v *= k;
        }
    }
}

fn relu_grad<T: Real>(d: &mut [T], pre: &[T]) {
    for (v, &p) in d.iter_mut().zip(pre) {
        if p <= T::zero() {
            *v = T::zero();
        }
    }
}

fn backward_sample<T: Real>(
    params: &CaptionerParams<T>,
    cache: &ForwardCache<T>,
    sample: &Sample<'_, T>,
    scale: f64,
    grads: &mut CaptionerParams<T>,
) {
    let cfg = &params.config;
    let d_logits: Vec<T> = cache
        .probs
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let y = if k == sample.target { 1.0 } else { 0.0 };
            T::lit((p - y) * scale)
        })
        .collect();
    add_outer_rows(&mut grads.out_w, 0, &d_logits, &cache.head_drop);
    for (b, &d) in grads.out_b.data.iter_mut().zip(&d_logits) {
        *b += d;
    }

    let mut d_head = vec![T::zero(); cfg.head_dim];
    matvec_t_rows_acc(&params.out_w, 0, &d_logits, &mut d_head);
    mask_grad(&mut d_head, cache.mask_head.as_ref());
    relu_grad(&mut d_head, &cache.head_pre);
    add_outer_rows(&mut grads.head_w, 0, &d_head, &cache.fused_drop);
    for (b, &d) in grads.head_b.data.iter_mut().zip(&d_head) {
        *b += d;
    }

    let mut d_fused = vec![T::zero(); cfg.fused_dim()];
    matvec_t_rows_acc(&params.head_w, 0, &d_head, &mut d_fused);
    mask_grad(&mut d_fused, cache.mask_fused.as_ref());

    let mut d_inputs: Vec<Vec<T>> = vec![vec![T::zero(); cfg.embed_dim]; cache.inputs.len()];
    backprop_direction(
        &params.forward,
        &mut grads.forward,
        &cache.inputs,
        &cache.forward,
        &d_fused[..cfg.hidden],
        &mut d_inputs,
    );
    if let (Some(cell), Some(grad_cell), Some(trace)) =
        (params.backward.as_ref(), grads.backward.as_mut(), cache.backward.as_ref())
    {
        backprop_direction(
            cell,
            grad_cell,
            &cache.inputs,
            trace,
            &d_fused[cfg.hidden..],
            &mut d_inputs,
        );
    }

    let mut d_pa = std::mem::take(&mut d_inputs[0]);
    relu_grad(&mut d_pa, &cache.pa_pre);
    add_outer_rows(&mut grads.proj_a_w, 0, &d_pa, sample.feat_a);
    for (b, &d) in grads.proj_a_b.data.iter_mut().zip(&d_pa) {
        *b += d;
    }
    let mut d_pb = std::mem::take(&mut d_inputs[1]);
    relu_grad(&mut d_pb, &cache.pb_pre);
    add_outer_rows(&mut grads.proj_b_w, 0, &d_pb, sample.feat_b);
    for (b, &d) in grads.proj_b_b.data.iter_mut().zip(&d_pb) {
        *b += d;
    }
    for (&token, d) in cache.tokens.iter().zip(&d_inputs[2..]) {
        for (e, &g) in grads.embedding.row_mut(token).iter_mut().zip(d) {
            *e += g;
        }
    }
}

/// Accumulates gradients of the mean batch loss into `grads` (which is
/// overwritten) and returns that loss.
pub fn backward_into<T: Real>(
    params: &CaptionerParams<T>,
    batch: &[Sample<'_, T>],
    grads: &mut CaptionerParams<T>,
) -> Result<f64, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    grads.fill_zero();
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for sample in batch {
        let cache = forward_cached(params, sample.feat_a, sample.feat_b, sample.prefix, sample.mode)?;
        total += loss(&cache.probs, sample.target)?;
        backward_sample(params, &cache, sample, scale, grads);
    }
    grads.embedding.row_mut(PAD_INDEX).fill(T::zero());
    Ok(total * scale)
}

/// Mean batch loss and its gradient with respect to every parameter.
pub fn backward<T: Real>(
    params: &CaptionerParams<T>,
    batch: &[Sample<'_, T>],
) -> Result<(f64, CaptionerParams<T>), ModelError> {
    let mut grads = params.zeros_like();
    let loss = backward_into(params, batch, &mut grads)?;
    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ArchitectureConfig, RnnKind};

    fn toy(kind: RnnKind, bidirectional: bool) -> ArchitectureConfig {
        ArchitectureConfig {
            dim_a: 6,
            dim_b: 8,
            proj_dim: 4,
            embed_dim: 4,
            hidden: 3,
            head_dim: 5,
            vocab_size: 7,
            max_len: 6,
            rnn_kind: kind,
            bidirectional,
            dropout_rate: 0.5,
        }
    }

    fn feats(cfg: &ArchitectureConfig, salt: f64) -> (Vec<f64>, Vec<f64>) {
        let a = (0..cfg.dim_a).map(|i| ((i as f64 + salt) * 0.7).sin().abs()).collect();
        let b = (0..cfg.dim_b).map(|i| ((i as f64 + salt) * 1.3).cos().abs()).collect();
        (a, b)
    }

    #[test]
    fn softmax_normalized_and_positive() {
        for kind in [RnnKind::Gru, RnnKind::Lstm] {
            for bi in [false, true] {
                let cfg = toy(kind, bi);
                let p = CaptionerParams::<f64>::init(&cfg, 3).unwrap();
                let (a, b) = feats(&cfg, 0.0);
                for mode in [Mode::Infer, Mode::Train { dropout_seed: 9 }] {
                    let probs = forward(&p, &a, &b, &[1, 3, 4, 0, 0, 0], mode).unwrap();
                    assert_eq!(probs.len(), 7);
                    assert!(probs.iter().all(|&v| v > 0.0));
                    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn reference_shapes_produce_626_outputs() {
        let cfg = ArchitectureConfig::default();
        let p = CaptionerParams::<f32>::init(&cfg, 0).unwrap();
        let a = vec![0.1f32; 1920];
        let b = vec![0.2f32; 4800];
        let mut prefix = vec![0usize; 54];
        prefix[0] = 2;
        prefix[1] = 17;
        let probs = forward(&p, &a, &b, &prefix, Mode::Infer).unwrap();
        assert_eq!(probs.len(), 626);
        assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn zero_recurrent_weights_give_uniform_output() {
        let cfg = toy(RnnKind::Gru, true);
        let mut p = CaptionerParams::<f64>::init(&cfg, 5).unwrap();
        for cell in [&mut p.forward].into_iter().chain(p.backward.as_mut()) {
            cell.w_input.fill_zero();
            cell.w_hidden.fill_zero();
        }
        let a = vec![0.0; cfg.dim_a];
        let b = vec![0.0; cfg.dim_b];
        let probs = forward(&p, &a, &b, &[1, 0, 0, 0, 0, 0], Mode::Infer).unwrap();
        for v in probs {
            assert!((v - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn loss_values() {
        assert_eq!(loss(&[0.0, 1.0], 1).unwrap(), 0.0);
        let uniform = vec![1.0 / 626.0; 626];
        assert!((loss(&uniform, 5).unwrap() - 626f64.ln()).abs() < 1e-12);
        assert!((626f64.ln() - 6.4394).abs() < 1e-4);
        assert!((loss(&[0.25, 0.5, 0.25], 1).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
        assert!(matches!(loss(&[0.5, 0.5], 0), Err(ModelError::PaddingTarget)));
    }

    #[test]
    fn padding_is_masked() {
        let cfg = toy(RnnKind::Lstm, true);
        let p = CaptionerParams::<f64>::init(&cfg, 11).unwrap();
        let (a, b) = feats(&cfg, 1.0);
        let short = forward(&p, &a, &b, &[1, 4], Mode::Infer).unwrap();
        let padded = forward(&p, &a, &b, &[1, 4, 0, 0, 0, 0, 0, 0, 0], Mode::Infer).unwrap();
        assert_eq!(short, padded);
    }

    #[test]
    fn invalid_inputs_rejected() {
        let cfg = toy(RnnKind::Gru, false);
        let p = CaptionerParams::<f64>::init(&cfg, 1).unwrap();
        let (a, b) = feats(&cfg, 0.0);
        assert!(matches!(
            forward(&p, &a[..5], &b, &[1], Mode::Infer),
            Err(ModelError::FeatureDim { stream: "A", .. })
        ));
        assert!(forward(&p, &a, &b, &[1, 0, 2], Mode::Infer).is_err());
        assert!(forward(&p, &a, &b, &[1, 7], Mode::Infer).is_err());
        assert!(forward(&p, &a, &b, &[1; 7], Mode::Infer).is_err());
    }

    #[test]
    fn bidirectional_reduces_to_unidirectional() {
        for kind in [RnnKind::Gru, RnnKind::Lstm] {
            let uni_cfg = toy(kind, false);
            let bi_cfg = toy(kind, true);
            let uni = CaptionerParams::<f64>::init(&uni_cfg, 21).unwrap();
            let mut bi = CaptionerParams::<f64>::init(&bi_cfg, 99).unwrap();
            bi.proj_a_w = uni.proj_a_w.clone();
            bi.proj_b_w = uni.proj_b_w.clone();
            bi.embedding = uni.embedding.clone();
            bi.forward = uni.forward.clone();
            let back = bi.backward.as_mut().unwrap();
            back.w_input.fill_zero();
            back.w_hidden.fill_zero();
            back.bias.fill_zero();
            for r in 0..bi_cfg.head_dim {
                let h = bi_cfg.hidden;
                bi.head_w.row_mut(r)[..h].copy_from_slice(uni.head_w.row(r));
            }
            bi.out_w = uni.out_w.clone();
            let (a, b) = feats(&uni_cfg, 2.0);
            let pu = forward(&uni, &a, &b, &[1, 2, 3], Mode::Infer).unwrap();
            let pb = forward(&bi, &a, &b, &[1, 2, 3], Mode::Infer).unwrap();
            for (x, y) in pu.iter().zip(&pb) {
                assert!((x - y).abs() < 1e-12, "{kind:?}");
            }
        }
    }

    #[test]
    fn perfect_prediction_has_zero_gradient() {
        let cfg = toy(RnnKind::Gru, true);
        let mut p = CaptionerParams::<f64>::init(&cfg, 4).unwrap();
        p.out_b.data[3] = 1000.0;
        let (a, b) = feats(&cfg, 0.0);
        let batch = [Sample {
            feat_a: &a,
            feat_b: &b,
            prefix: &[1, 2],
            target: 3,
            mode: Mode::Train { dropout_seed: 1 },
        }];
        let (l, g) = backward(&p, &batch).unwrap();
        assert!(l.abs() < 1e-8);
        for (name, t) in g.tensors() {
            assert!(t.data.iter().all(|v| v.abs() < 1e-8), "{name}");
        }
    }

    #[test]
    fn duplicated_sample_keeps_mean_gradient() {
        let cfg = toy(RnnKind::Lstm, true);
        let p = CaptionerParams::<f64>::init(&cfg, 8).unwrap();
        let (a, b) = feats(&cfg, 3.0);
        let s = Sample {
            feat_a: &a,
            feat_b: &b,
            prefix: &[1, 5],
            target: 2,
            mode: Mode::Train { dropout_seed: 77 },
        };
        let (l1, g1) = backward(&p, &[s]).unwrap();
        let (l2, g2) = backward(&p, &[s, s]).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for ((_, x), (_, y)) in g1.tensors().into_iter().zip(g2.tensors()) {
            for (u, v) in x.data.iter().zip(&y.data) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn softmax_sums_to_one(logits in prop::collection::vec(-50.0f64..50.0, 1..40)) {
                let p = softmax(&logits);
                prop_assert!(p.iter().all(|&v| v > 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }

            #[test]
            fn trailing_padding_never_changes_output(
                tokens in prop::collection::vec(1usize..7, 1..6),
                pad in 0usize..4,
                bi in any::<bool>(),
                lstm in any::<bool>(),
                dropout_seed in any::<u64>(),
            ) {
                let kind = if lstm { RnnKind::Lstm } else { RnnKind::Gru };
                let cfg = toy(kind, bi);
                let p = CaptionerParams::<f64>::init(&cfg, 4).unwrap();
                let (a, b) = feats(&cfg, 2.0);
                let mut padded = tokens.clone();
                padded.resize(tokens.len() + pad, 0);
                for mode in [Mode::Infer, Mode::Train { dropout_seed }] {
                    let short = forward(&p, &a, &b, &tokens, mode).unwrap();
                    let long = forward(&p, &a, &b, &padded, mode).unwrap();
                    prop_assert_eq!(short, long);
                }
            }
        }
    }
}
