//! BLEU-1..4 and ROUGE-1/2/L.
//!
//! Text is normalized with [`crate::text::normalize_caption`] and split on
//! whitespace before scoring. Corpus BLEU sums clipped counts and lengths
//! over all pairs; ROUGE is averaged over pairs. The headline ROUGE values
//! are F1 scores.

mod bleu;
mod rouge;

pub use bleu::{
    bleu, brevity_penalty, corpus_bleu, effective_reference_length, modified_precision, BleuStats, NgramCounts,
    Smoothing,
};
pub use rouge::{lcs_length, rouge_l, rouge_n, Prf};

use serde::{Deserialize, Serialize};

use crate::text::normalize_caption;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("cannot evaluate an empty corpus")]
    EmptyCorpus,
}

/// Normalized whitespace tokens of a caption.
pub fn tokenize(text: &str) -> Vec<String> {
    normalize_caption(text).split_whitespace().map(str::to_owned).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScores {
    pub candidate: String,
    pub reference: String,
    /// Sentence BLEU-1..4.
    pub bleu: [f64; 4],
    pub rouge1: Prf,
    pub rouge2: Prf,
    pub rouge_l: Prf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n_pairs: usize,
    pub bleu1: f64,
    pub bleu2: f64,
    pub bleu3: f64,
    pub bleu4: f64,
    pub rouge1: f64,
    pub rouge2: f64,
    pub rouge_l: f64,
    pub rouge1_detail: Prf,
    pub rouge2_detail: Prf,
    pub rouge_l_detail: Prf,
    pub per_sample: Vec<SampleScores>,
}

fn mean_prf(items: impl Iterator<Item = Prf>, n: usize) -> Prf {
    let mut sum = Prf::default();
    for p in items {
        sum.recall += p.recall;
        sum.precision += p.precision;
        sum.f1 += p.f1;
    }
    let n = n as f64;
    Prf {
        recall: sum.recall / n,
        precision: sum.precision / n,
        f1: sum.f1 / n,
    }
}

/// Scores `(candidate, reference)` caption pairs.
pub fn evaluate_corpus<C: AsRef<str>, R: AsRef<str>>(pairs: &[(C, R)]) -> Result<MetricReport, MetricsError> {
    evaluate_corpus_with(pairs, Smoothing::None)
}

pub fn evaluate_corpus_with<C: AsRef<str>, R: AsRef<str>>(
    pairs: &[(C, R)],
    smoothing: Smoothing,
) -> Result<MetricReport, MetricsError> {
    if pairs.is_empty() {
        return Err(MetricsError::EmptyCorpus);
    }
    let mut corpus = BleuStats::default();
    let mut per_sample = Vec::with_capacity(pairs.len());
    for (cand, reference) in pairs {
        let c = tokenize(cand.as_ref());
        let r = tokenize(reference.as_ref());
        let refs = [r];
        let stats = BleuStats::from_pair(&c, &refs);
        corpus.merge(&stats);
        let [r] = refs;
        per_sample.push(SampleScores {
            candidate: c.join(" "),
            reference: r.join(" "),
            bleu: [1, 2, 3, 4].map(|n| stats.score(n, smoothing)),
            rouge1: rouge_n(&c, &r, 1),
            rouge2: rouge_n(&c, &r, 2),
            rouge_l: rouge_l(&c, &r),
        });
    }
    let n = per_sample.len();
    let rouge1_detail = mean_prf(per_sample.iter().map(|s| s.rouge1), n);
    let rouge2_detail = mean_prf(per_sample.iter().map(|s| s.rouge2), n);
    let rouge_l_detail = mean_prf(per_sample.iter().map(|s| s.rouge_l), n);
    Ok(MetricReport {
        n_pairs: n,
        bleu1: corpus.score(1, smoothing),
        bleu2: corpus.score(2, smoothing),
        bleu3: corpus.score(3, smoothing),
        bleu4: corpus.score(4, smoothing),
        rouge1: rouge1_detail.f1,
        rouge2: rouge2_detail.f1,
        rouge_l: rouge_l_detail.f1,
        rouge1_detail,
        rouge2_detail,
        rouge_l_detail,
        per_sample,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_pairs_score_one() {
        let pairs = [
            ("Bright ring in the upper left quadrant.", "bright ring in the upper left quadrant"),
            ("dark oval near the fundus", "Dark oval near the fundus!"),
        ];
        let r = evaluate_corpus(&pairs).unwrap();
        for v in [r.bleu1, r.bleu2, r.bleu3, r.bleu4, r.rouge1, r.rouge2, r.rouge_l] {
            assert_eq!(v, 1.0);
        }
        assert_eq!(r.n_pairs, 2);
    }

    #[test]
    fn singleton_equals_pair_scores() {
        let r = evaluate_corpus(&[("the cat sat on the mat today", "the cat is on the mat today")]).unwrap();
        let s = &r.per_sample[0];
        assert_eq!([r.bleu1, r.bleu2, r.bleu3, r.bleu4], s.bleu);
        assert_eq!(r.rouge_l, s.rouge_l.f1);
        assert_eq!(r.rouge1_detail, s.rouge1);
    }

    #[test]
    fn normalization_applies_before_scoring() {
        // "a" is a single-letter token and is removed.
        let r = evaluate_corpus(&[("A femur, visible", "femur visible")]).unwrap();
        assert_eq!(r.per_sample[0].candidate, "femur visible");
        assert_eq!(r.bleu2, 1.0);
    }

    #[test]
    fn empty_rejected() {
        let none: [(&str, &str); 0] = [];
        assert_eq!(evaluate_corpus(&none).unwrap_err(), MetricsError::EmptyCorpus);
    }
}
