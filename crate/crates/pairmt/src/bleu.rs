//! Corpus-level BLEU-4 with clipped n-gram counts, closest-reference-length
//! brevity penalty and case-insensitive comparison. No smoothing: a zero
//! corpus-level n-gram precision yields BLEU 0.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::corpus::Sentence;

pub const MAX_NGRAM: usize = 4;

#[derive(Debug, Error)]
pub enum BleuError {
    #[error("empty hypothesis set")]
    Empty,
    #[error("hypothesis/reference counts differ: {hyps} vs {refs}")]
    CountMismatch { hyps: usize, refs: usize },
    #[error("sentence {0} has no references")]
    NoReferences(usize),
}

#[derive(Debug, Clone, Serialize)]
pub struct BleuReport {
    pub bleu: f64,
    pub precisions: [f64; MAX_NGRAM],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
}

impl BleuReport {
    /// Single-line structured record.
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

fn lower(s: &[String]) -> Vec<String> {
    s.iter().map(|t| t.to_lowercase()).collect()
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut m: HashMap<&[String], u64> = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

/// Corpus BLEU over tokenized sentences; each hypothesis may have several
/// references.
pub fn corpus_bleu(
    hypotheses: &[Sentence],
    references: &[Vec<Sentence>],
) -> Result<BleuReport, BleuError> {
    if hypotheses.is_empty() {
        return Err(BleuError::Empty);
    }
    if hypotheses.len() != references.len() {
        return Err(BleuError::CountMismatch {
            hyps: hypotheses.len(),
            refs: references.len(),
        });
    }

    let mut matched = [0u64; MAX_NGRAM];
    let mut total = [0u64; MAX_NGRAM];
    let mut hyp_len = 0usize;
    let mut ref_len = 0usize;

    for (i, (hyp, refs)) in hypotheses.iter().zip(references).enumerate() {
        if refs.is_empty() {
            return Err(BleuError::NoReferences(i));
        }
        let hyp = lower(hyp);
        let refs: Vec<Vec<String>> = refs.iter().map(|r| lower(r)).collect();

        hyp_len += hyp.len();
        // closest reference length, ties to shorter
        let closest = refs
            .iter()
            .map(|r| r.len())
            .min_by_key(|&l| {
                let diff = (l as i64 - hyp.len() as i64).abs();
                (diff, l)
            })
            .unwrap();
        ref_len += closest;

        for n in 1..=MAX_NGRAM {
            let hyp_counts = ngram_counts(&hyp, n);
            let mut max_ref: HashMap<&[String], u64> = HashMap::new();
            for r in &refs {
                for (gram, c) in ngram_counts(r, n) {
                    let e = max_ref.entry(gram).or_insert(0);
                    *e = (*e).max(c);
                }
            }
            for (gram, c) in &hyp_counts {
                total[n - 1] += c;
                if let Some(rc) = max_ref.get(gram) {
                    matched[n - 1] += (*c).min(*rc);
                }
            }
        }
    }

    let mut precisions = [0.0; MAX_NGRAM];
    for n in 0..MAX_NGRAM {
        if total[n] > 0 {
            precisions[n] = matched[n] as f64 / total[n] as f64;
        }
    }
    let brevity_penalty = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    let bleu = if precisions.iter().all(|p| *p > 0.0) {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_NGRAM as f64;
        brevity_penalty * log_mean.exp() * 100.0
    } else {
        0.0
    };

    Ok(BleuReport {
        bleu,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
    })
}

/// Index of the best dev score; earliest iteration on ties.
pub fn select_best(history: &[f64]) -> Option<usize> {
    let mut best = 0usize;
    if history.is_empty() {
        return None;
    }
    for (i, &v) in history.iter().enumerate() {
        if v > history[best] {
            best = i;
        }
    }
    Some(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;

    fn single(hyp: &str, rf: &str) -> BleuReport {
        corpus_bleu(&[tokenize(hyp)], &[vec![tokenize(rf)]]).unwrap()
    }

    #[test]
    fn identity_is_100() {
        let r = single("a b c d e", "a b c d e");
        assert_eq!(r.bleu, 100.0);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn disjoint_unigrams_are_zero() {
        let r = single("a b c d", "w x y z");
        assert_eq!(r.bleu, 0.0);
        assert_eq!(r.precisions[0], 0.0);
    }

    #[test]
    fn short_sentence_precisions_and_bp() {
        // hyp "the cat sat", ref "the cat sat down": p1..p3 = 1, no 4-grams
        let r = single("the cat sat", "the cat sat down");
        assert_eq!(r.precisions[0], 1.0);
        assert_eq!(r.precisions[1], 1.0);
        assert_eq!(r.precisions[2], 1.0);
        assert_eq!(r.precisions[3], 0.0);
        assert!((r.brevity_penalty - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
        assert_eq!(r.bleu, 0.0);
    }

    #[test]
    fn case_insensitive() {
        let a = single("The Cat Sat Down", "the cat sat down");
        assert_eq!(a.bleu, 100.0);
    }

    #[test]
    fn multi_reference_clipping_and_closest_length() {
        let hyp = tokenize("a b c d e");
        let refs = vec![vec![tokenize("a b c d f g"), tokenize("b c d e")]];
        let r = corpus_bleu(&[hyp], &refs).unwrap();
        // closest length to 5: |6-5| = |4-5| = 1, tie goes to the shorter (4)
        assert_eq!(r.ref_len, 4);
        assert_eq!(r.brevity_penalty, 1.0);
    }

    #[test]
    fn bounded_0_100() {
        let r = single("a a a a a", "a b c d e");
        assert!(r.bleu >= 0.0 && r.bleu <= 100.0);
    }

    #[test]
    fn empty_rejected() {
        assert!(matches!(corpus_bleu(&[], &[]), Err(BleuError::Empty)));
    }

    #[test]
    fn select_best_rules() {
        assert_eq!(select_best(&[30.0, 35.0, 34.0]), Some(1));
        assert_eq!(select_best(&[30.0, 30.0]), Some(0));
        assert_eq!(select_best(&[12.5]), Some(0));
        assert_eq!(select_best(&[]), None);
    }
}
