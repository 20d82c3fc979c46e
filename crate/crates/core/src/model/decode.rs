//! Greedy caption generation.

use super::network::{forward, Mode};
use super::params::CaptionerParams;
use super::ModelError;
use crate::text::{Vocabulary, PAD_INDEX};

/// Result of decoding one image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GeneratedCaption {
    /// Emitted tokens, starting with `<START>`.
    pub tokens: Vec<usize>,
    /// Words between the markers.
    pub text: String,
}

/// Index of the largest probability among indices `1..`, lowest index on ties.
pub fn argmax_non_padding(probs: &[f64]) -> usize {
    let mut best = PAD_INDEX + 1;
    for (i, &p) in probs.iter().enumerate().skip(PAD_INDEX + 2) {
        if p > probs[best] {
            best = i;
        }
    }
    best
}

/// Starts from `<START>` and repeatedly appends the most probable next word
/// until `<END>` is produced or the prefix holds `max_len` tokens.
pub fn greedy_caption(
    params: &CaptionerParams<f32>,
    vocab: &Vocabulary,
    feat_a: &[f32],
    feat_b: &[f32],
) -> Result<GeneratedCaption, ModelError> {
    let max_len = params.config.max_len;
    if vocab.size() + 1 != params.config.vocab_size {
        return Err(ModelError::VocabularyMismatch {
            vocabulary: vocab.size() + 1,
            model: params.config.vocab_size,
        });
    }
    let end = vocab.end_index();
    let mut tokens = vec![vocab.start_index()];
    let mut prefix = vec![PAD_INDEX; max_len];
    prefix[0] = tokens[0];
    while tokens.len() < max_len {
        let probs = forward(params, feat_a, feat_b, &prefix, Mode::Infer)?;
        let next = argmax_non_padding(&probs);
        prefix[tokens.len()] = next;
        tokens.push(next);
        if next == end {
            break;
        }
    }
    let text = vocab.decode(&tokens)?;
    Ok(GeneratedCaption { tokens, text })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ArchitectureConfig;

    #[test]
    fn argmax_skips_padding_and_prefers_lowest_tie() {
        assert_eq!(argmax_non_padding(&[0.9, 0.05, 0.05]), 1);
        assert_eq!(argmax_non_padding(&[0.1, 0.2, 0.5, 0.2]), 2);
        assert_eq!(argmax_non_padding(&[0.0, 0.3, 0.4, 0.4]), 2);
    }

    fn setup() -> (CaptionerParams<f32>, Vocabulary) {
        let vocab = Vocabulary::build(&["<START> bright ring here <END>"]).unwrap();
        let cfg = ArchitectureConfig {
            dim_a: 3,
            dim_b: 2,
            proj_dim: 4,
            embed_dim: 4,
            hidden: 3,
            head_dim: 5,
            vocab_size: vocab.size() + 1,
            max_len: 5,
            ..Default::default()
        };
        (CaptionerParams::init(&cfg, 3).unwrap(), vocab)
    }

    #[test]
    fn stops_at_end_token() {
        let (mut p, vocab) = setup();
        // Force <END> regardless of input.
        p.out_b.data[vocab.end_index()] = 100.0;
        let c = greedy_caption(&p, &vocab, &[0.1, 0.2, 0.3], &[0.5, 0.5]).unwrap();
        assert_eq!(c.tokens, vec![vocab.start_index(), vocab.end_index()]);
        assert_eq!(c.text, "");
    }

    #[test]
    fn stops_at_max_len() {
        let (mut p, vocab) = setup();
        let ring = vocab.index_of("ring").unwrap();
        p.out_b.data[ring] = 100.0;
        let c = greedy_caption(&p, &vocab, &[0.1, 0.2, 0.3], &[0.5, 0.5]).unwrap();
        assert_eq!(c.tokens.len(), 5);
        assert_eq!(c.text, "ring ring ring ring");
    }

    #[test]
    fn deterministic_and_checks_vocabulary() {
        let (p, vocab) = setup();
        let a = greedy_caption(&p, &vocab, &[0.1, 0.2, 0.3], &[0.5, 0.5]).unwrap();
        let b = greedy_caption(&p, &vocab, &[0.1, 0.2, 0.3], &[0.5, 0.5]).unwrap();
        assert_eq!(a, b);
        let other = Vocabulary::build(&["<START> a b c d e <END>"]).unwrap();
        assert!(matches!(
            greedy_caption(&p, &other, &[0.1, 0.2, 0.3], &[0.5, 0.5]),
            Err(ModelError::VocabularyMismatch { .. })
        ));
    }
}
