use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::retrieval::{cosine, EmbeddingBackend, RetrievalError};

pub const DEFAULT_OUTLIER_PCT: f64 = 1000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Exclusion {
    Outlier,
    ZeroGroundTruth,
    NonNumeric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelativeError {
    Percent(f64),
    Excluded(Exclusion),
}

/// `100·|pred − gt|/|gt|`, excluded above `outlier_pct` or when `gt = 0`.
pub fn relative_error(gt: f64, pred: f64, outlier_pct: f64) -> RelativeError {
    if !gt.is_finite() || !pred.is_finite() {
        return RelativeError::Excluded(Exclusion::NonNumeric);
    }
    if gt == 0.0 {
        return RelativeError::Excluded(Exclusion::ZeroGroundTruth);
    }
    let pct = 100.0 * (pred - gt).abs() / gt.abs();
    if pct > outlier_pct {
        RelativeError::Excluded(Exclusion::Outlier)
    } else {
        RelativeError::Percent(pct)
    }
}

fn ngrams(tokens: &[&str], n: usize) -> BTreeMap<Vec<String>, usize> {
    let mut out = BTreeMap::new();
    for w in tokens.windows(n) {
        *out.entry(w.iter().map(|s| s.to_string()).collect()).or_insert(0) += 1;
    }
    out
}

/// Sentence BLEU-4 over whitespace tokens: clipped n-gram precisions, uniform
/// weights, brevity penalty, no smoothing (any empty precision gives 0).
pub fn bleu(reference: &str, candidate: &str) -> f64 {
    let r: Vec<&str> = reference.split_whitespace().collect();
    let c: Vec<&str> = candidate.split_whitespace().collect();
    if c.is_empty() || r.is_empty() {
        return 0.0;
    }
    let mut log_sum = 0.0;
    for n in 1..=4 {
        let cand = ngrams(&c, n);
        let refs = ngrams(&r, n);
        let total: usize = cand.values().sum();
        let clipped: usize = cand.iter().map(|(g, k)| (*k).min(refs.get(g).copied().unwrap_or(0))).sum();
        if clipped == 0 || total == 0 {
            return 0.0;
        }
        log_sum += (clipped as f64 / total as f64).ln() / 4.0;
    }
    let bp = if c.len() > r.len() { 1.0 } else { (1.0 - r.len() as f64 / c.len() as f64).exp() };
    (bp * log_sum.exp()).clamp(0.0, 1.0)
}

/// Cosine similarity of the two answers' embeddings.
pub fn text_similarity(gt: &str, pred: &str, backend: &dyn EmbeddingBackend) -> Result<f64, RetrievalError> {
    let v = backend.embed(&[gt.to_string(), pred.to_string()])?;
    Ok(cosine(&v[0], &v[1]))
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

pub(crate) fn median(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::retrieval::HashingEmbedder;

    #[test]
    fn relative_error_examples() {
        assert_eq!(relative_error(100.0, 110.0, DEFAULT_OUTLIER_PCT), RelativeError::Percent(10.0));
        assert_eq!(relative_error(50.0, 500000.0, DEFAULT_OUTLIER_PCT), RelativeError::Excluded(Exclusion::Outlier));
        assert_eq!(relative_error(0.0, 1.0, DEFAULT_OUTLIER_PCT), RelativeError::Excluded(Exclusion::ZeroGroundTruth));
    }

    #[test]
    fn bleu_matches_reference_implementations() {
        // values from nltk sentence_bleu and sacrebleu (no smoothing)
        assert!((bleu("the cat sat on the mat", "the cat sat on a mat") - 0.537284965911771).abs() < 1e-12);
        assert!((bleu("a b c d e f g", "a b c d e") - 0.6703200460356393).abs() < 1e-12);
        assert_eq!(bleu("one two three four", "one two three four"), 1.0);
        assert_eq!(bleu("one two three four", "five six seven eight"), 0.0);
    }

    #[test]
    fn similarity_of_identical_text_is_one() {
        let e = HashingEmbedder::new(128);
        assert!((text_similarity("oil prices fell", "oil prices fell", &e).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(median(&[3.0, 1.0, 2.0, 10.0]), 2.5);
    }
}
