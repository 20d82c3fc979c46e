use super::bleu::NgramCounts;

/// Recall, precision and their harmonic mean.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Prf {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl Prf {
    pub fn from_counts(overlap: usize, reference_total: usize, candidate_total: usize) -> Self {
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let recall = ratio(overlap, reference_total);
        let precision = ratio(overlap, candidate_total);
        let f1 = if recall + precision == 0.0 {
            0.0
        } else {
            2.0 * recall * precision / (recall + precision)
        };
        Self { recall, precision, f1 }
    }
}

pub fn rouge_n(candidate: &[String], reference: &[String], n: usize) -> Prf {
    let cand = NgramCounts::new(candidate, n);
    let refs = NgramCounts::new(reference, n);
    let overlap = cand.counts.iter().map(|(gram, &c)| c.min(refs.get(gram))).sum();
    Prf::from_counts(overlap, refs.total(), cand.total())
}

/// Length of the longest common subsequence, O(|a|·|b|) time and O(|b|) space.
pub fn lcs_length<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

pub fn rouge_l(candidate: &[String], reference: &[String]) -> Prf {
    let l = lcs_length(candidate, reference);
    Prf::from_counts(l, reference.len(), candidate.len())
}
