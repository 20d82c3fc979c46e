use std::collections::HashMap;

/// Occurrence counts of every n-gram of one order in a token sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NgramCounts<'a> {
    pub n: usize,
    pub counts: HashMap<&'a [String], usize>,
}

impl<'a> NgramCounts<'a> {
    pub fn new(tokens: &'a [String], n: usize) -> Self {
        assert!(n >= 1, "n-gram order must be at least 1");
        let mut counts = HashMap::new();
        if tokens.len() >= n {
            for gram in tokens.windows(n) {
                *counts.entry(gram).or_insert(0) += 1;
            }
        }
        Self { n, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn get(&self, gram: &[String]) -> usize {
        self.counts.get(gram).copied().unwrap_or(0)
    }
}

/// Clipped n-gram matches and the candidate's n-gram total.
pub fn modified_precision(candidate: &[String], references: &[Vec<String>], n: usize) -> (usize, usize) {
    let cand = NgramCounts::new(candidate, n);
    let refs: Vec<NgramCounts<'_>> = references.iter().map(|r| NgramCounts::new(r, n)).collect();
    let clipped = cand
        .counts
        .iter()
        .map(|(gram, &count)| {
            let max_ref = refs.iter().map(|r| r.get(gram)).max().unwrap_or(0);
            count.min(max_ref)
        })
        .sum();
    (clipped, cand.total())
}

/// Reference length closest to the candidate length, the shorter one on ties.
pub fn effective_reference_length(candidate_len: usize, reference_lens: &[usize]) -> usize {
    reference_lens
        .iter()
        .copied()
        .min_by_key(|&r| (r.abs_diff(candidate_len), r))
        .unwrap_or(0)
}

pub fn brevity_penalty(candidate_len: usize, effective_ref_len: usize) -> f64 {
    if candidate_len == 0 {
        0.0
    } else if candidate_len > effective_ref_len {
        1.0
    } else {
        (1.0 - effective_ref_len as f64 / candidate_len as f64).exp()
    }
}

/// Zero-precision handling for BLEU.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Smoothing {
    /// A zero clipped count makes the score 0.
    #[default]
    None,
    /// A zero clipped count is replaced by the given epsilon.
    Epsilon(f64),
}

/// Summed statistics from which BLEU is computed, per sentence or per corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct BleuStats {
    pub clipped: [usize; 4],
    pub totals: [usize; 4],
    pub candidate_len: usize,
    pub reference_len: usize,
}

impl BleuStats {
    pub fn from_pair(candidate: &[String], references: &[Vec<String>]) -> Self {
        let mut stats = Self {
            candidate_len: candidate.len(),
            reference_len: effective_reference_length(
                candidate.len(),
                &references.iter().map(Vec::len).collect::<Vec<_>>(),
            ),
            ..Self::default()
        };
        for n in 1..=4 {
            let (c, t) = modified_precision(candidate, references, n);
            stats.clipped[n - 1] = c;
            stats.totals[n - 1] = t;
        }
        stats
    }

    pub fn merge(&mut self, other: &Self) {
        for i in 0..4 {
            self.clipped[i] += other.clipped[i];
            self.totals[i] += other.totals[i];
        }
        self.candidate_len += other.candidate_len;
        self.reference_len += other.reference_len;
    }

    /// Uniform-weight geometric mean of precisions 1..=max_n times the
    /// brevity penalty.
    pub fn score(&self, max_n: usize, smoothing: Smoothing) -> f64 {
        assert!((1..=4).contains(&max_n), "BLEU order must be in 1..=4");
        let bp = brevity_penalty(self.candidate_len, self.reference_len);
        if bp == 0.0 {
            return 0.0;
        }
        let mut log_sum = 0.0;
        for i in 0..max_n {
            if self.totals[i] == 0 {
                return 0.0;
            }
            let numerator = match (self.clipped[i], smoothing) {
                (0, Smoothing::None) => return 0.0,
                (0, Smoothing::Epsilon(eps)) => eps,
                (c, _) => c as f64,
            };
            log_sum += (numerator / self.totals[i] as f64).ln();
        }
        bp * (log_sum / max_n as f64).exp()
    }
}

/// Sentence BLEU-`max_n` without smoothing.
pub fn bleu(candidate: &[String], references: &[Vec<String>], max_n: usize) -> f64 {
    BleuStats::from_pair(candidate, references).score(max_n, Smoothing::None)
}

/// Corpus BLEU: counts and lengths are summed over all pairs before the ratio.
pub fn corpus_bleu(pairs: &[(Vec<String>, Vec<Vec<String>>)], max_n: usize, smoothing: Smoothing) -> f64 {
    let mut total = BleuStats::default();
    for (cand, refs) in pairs {
        total.merge(&BleuStats::from_pair(cand, refs));
    }
    total.score(max_n, smoothing)
}
