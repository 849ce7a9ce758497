//! Beam-search decoding with n-best extraction and length-normalized scoring.
//!
//! Pruning during expansion compares accumulated (unnormalized) log-probability;
//! length normalization applies only to the final ranking. A hypothesis that
//! emits EOS retires immediately to the finished pool and stops consuming beam
//! slots. Ties break lexicographically on token ids for determinism.

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::{BOS_ID, EOS_ID, PAD_ID};
use crate::model::{Model, ModelError};
use crate::tensor::NodeId;

#[derive(Debug, Error)]
pub enum BeamError {
    #[error("beam_size must satisfy beam_size >= n_best >= 1, got beam {beam} n_best {n_best}")]
    BadSizes { beam: usize, n_best: usize },
    #[error("max_len must be >= 1")]
    BadMaxLen,
    #[error("empty hypothesis")]
    EmptyHypothesis,
    #[error("hypothesis not finished")]
    Unfinished,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// A complete translation hypothesis. `log_prob` is the accumulated sum of
/// stepwise log-probabilities, EOS included (also for force-finished ones).
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub token_ids: Vec<u32>,
    pub log_prob: f64,
    pub finished: bool,
    /// True when EOS was appended because the search hit `max_len`.
    pub forced: bool,
}

impl Hypothesis {
    /// Tokens without the trailing EOS.
    pub fn surface_ids(&self) -> &[u32] {
        match self.token_ids.split_last() {
            Some((&EOS_ID, rest)) => rest,
            _ => &self.token_ids,
        }
    }
}

/// Length-normalized score: accumulated log-probability divided by token
/// count (EOS included).
pub fn normalized_score(h: &Hypothesis) -> Result<f64, BeamError> {
    if !h.finished {
        return Err(BeamError::Unfinished);
    }
    if h.token_ids.is_empty() {
        return Err(BeamError::EmptyHypothesis);
    }
    Ok(h.log_prob / h.token_ids.len() as f64)
}

/// Finished hypotheses sorted by normalized score, descending.
#[derive(Debug, Clone)]
pub struct NBestList {
    pub hypotheses: Vec<Hypothesis>,
    pub source_ids: Vec<u32>,
}

impl NBestList {
    pub fn scores(&self) -> Vec<f64> {
        self.hypotheses
            .iter()
            .map(|h| normalized_score(h).expect("finished"))
            .collect()
    }

    /// True when every hypothesis had to be force-finished.
    pub fn all_forced(&self) -> bool {
        !self.hypotheses.is_empty() && self.hypotheses.iter().all(|h| h.forced)
    }
}

struct Live {
    tokens: Vec<u32>,
    log_prob: f64,
    state: NodeId,
    prev_token: u32,
}

/// Maximum target length used when synthesizing pseudo data: bounded both by
/// the model cap and by twice the source length plus a small margin.
pub fn synthesis_max_len(model_cap: usize, src_len: usize) -> usize {
    model_cap.min(2 * src_len + 5).max(1)
}

/// Standard beam expansion keeping the `beam_size` best partial hypotheses by
/// accumulated log-probability; returns the top `n_best` finished hypotheses
/// by normalized score.
pub fn beam_search(
    model: &Model,
    source_ids: &[u32],
    beam_size: usize,
    n_best: usize,
    max_len: usize,
) -> Result<NBestList, BeamError> {
    if n_best < 1 || beam_size < n_best {
        return Err(BeamError::BadSizes {
            beam: beam_size,
            n_best,
        });
    }
    if max_len == 0 {
        return Err(BeamError::BadMaxLen);
    }

    let mut sess = model.session(false);
    let enc = sess.encode(source_ids)?;
    let state0 = sess.init_state(&enc);

    let mut live = vec![Live {
        tokens: Vec::new(),
        log_prob: 0.0,
        state: state0,
        prev_token: BOS_ID,
    }];
    let mut pool: Vec<Hypothesis> = Vec::new();
    let vocab = model.config.tgt_vocab;

    for _ in 0..max_len {
        if live.is_empty() || pool.len() >= beam_size {
            break;
        }
        // (parent index, token, accumulated log_prob, parent's new state)
        let mut cands: Vec<(usize, u32, f64, NodeId)> = Vec::with_capacity(live.len() * vocab);
        for (pi, item) in live.iter().enumerate() {
            let step = sess.decode_step(item.state, item.prev_token, &enc);
            let lps = sess.value(step.log_probs);
            for tok in 0..vocab as u32 {
                if tok == PAD_ID || tok == BOS_ID {
                    continue;
                }
                cands.push((pi, tok, item.log_prob + lps[tok as usize], step.state));
            }
        }
        cands.sort_by(|a, b| {
            b.2.partial_cmp(&a.2)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| {
                    let sa = (&live[a.0].tokens, a.1);
                    let sb = (&live[b.0].tokens, b.1);
                    sa.cmp(&sb)
                })
        });
        cands.truncate(beam_size);

        let mut next = Vec::with_capacity(beam_size);
        for (pi, tok, lp, state) in cands {
            let mut tokens = live[pi].tokens.clone();
            tokens.push(tok);
            if tok == EOS_ID {
                pool.push(Hypothesis {
                    token_ids: tokens,
                    log_prob: lp,
                    finished: true,
                    forced: false,
                });
            } else {
                next.push(Live {
                    tokens,
                    log_prob: lp,
                    state,
                    prev_token: tok,
                });
            }
        }
        live = next;
    }

    if pool.is_empty() {
        // nothing finished within max_len: force-finish the surviving beam
        for item in &live {
            let step = sess.decode_step(item.state, item.prev_token, &enc);
            let eos_lp = sess.value(step.log_probs)[EOS_ID as usize];
            let mut tokens = item.tokens.clone();
            tokens.push(EOS_ID);
            pool.push(Hypothesis {
                token_ids: tokens,
                log_prob: item.log_prob + eos_lp,
                finished: true,
                forced: true,
            });
        }
    }

    pool.sort_by(|a, b| {
        let sa = normalized_score(a).expect("finished");
        let sb = normalized_score(b).expect("finished");
        sb.partial_cmp(&sa)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.token_ids.cmp(&b.token_ids))
    });
    pool.truncate(n_best);
    Ok(NBestList {
        hypotheses: pool,
        source_ids: source_ids.to_vec(),
    })
}

/// Translates many sentences; internally groups by length (stable buckets)
/// but returns results in the original input order, each identical to a
/// standalone `beam_search` call. Per-sentence failures do not abort the batch.
pub fn batch_translate(
    model: &Model,
    sources: &[Vec<u32>],
    beam_size: usize,
    n_best: usize,
) -> Vec<Result<NBestList, BeamError>> {
    let mut order: Vec<usize> = (0..sources.len()).collect();
    order.sort_by_key(|&i| sources[i].len());

    let done: Vec<(usize, Result<NBestList, BeamError>)> = order
        .par_iter()
        .map(|&i| {
            let max_len = synthesis_max_len(model.config.max_len, sources[i].len());
            (i, beam_search(model, &sources[i], beam_size, n_best, max_len))
        })
        .collect();

    let mut out: Vec<Option<Result<NBestList, BeamError>>> =
        (0..sources.len()).map(|_| None).collect();
    for (i, r) in done {
        out[i] = Some(r);
    }
    out.into_iter().map(|r| r.expect("all filled")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sequence_log_prob, Model, ModelConfig};

    fn tiny_model(seed: u64) -> Model {
        Model::init(
            ModelConfig {
                d_emb: 4,
                d_hidden: 5,
                src_vocab: 5,
                tgt_vocab: 5,
                max_len: 8,
            },
            seed,
        )
    }

    #[test]
    fn beam_one_equals_greedy() {
        let model = tiny_model(3);
        let src = [4u32, 3];
        let nb = beam_search(&model, &src, 1, 1, 6).unwrap();
        assert_eq!(nb.hypotheses.len(), 1);

        // greedy reference: repeatedly take the argmax
        let mut sess = model.session(false);
        let enc = sess.encode(&src).unwrap();
        let mut state = sess.init_state(&enc);
        let mut prev = BOS_ID;
        let mut tokens = Vec::new();
        let mut lp = 0.0;
        for _ in 0..6 {
            let step = sess.decode_step(state, prev, &enc);
            let lps = sess.value(step.log_probs);
            let (tok, best) = lps
                .iter()
                .enumerate()
                .filter(|(t, _)| *t != PAD_ID as usize && *t != BOS_ID as usize)
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap();
            tokens.push(tok as u32);
            lp += best;
            if tok as u32 == EOS_ID {
                break;
            }
            state = step.state;
            prev = tok as u32;
        }
        if *tokens.last().unwrap() == EOS_ID {
            assert_eq!(nb.hypotheses[0].token_ids, tokens);
            assert!((nb.hypotheses[0].log_prob - lp).abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_score_arithmetic() {
        let h = Hypothesis {
            token_ids: vec![4, 4, 4, EOS_ID],
            log_prob: -2.0,
            finished: true,
            forced: false,
        };
        assert!((normalized_score(&h).unwrap() + 0.5).abs() < 1e-15);
        let h1 = Hypothesis {
            token_ids: vec![EOS_ID],
            log_prob: -0.7,
            finished: true,
            forced: false,
        };
        assert!((normalized_score(&h1).unwrap() + 0.7).abs() < 1e-15);
    }

    #[test]
    fn longer_hypothesis_wins_at_equal_log_prob() {
        let short = Hypothesis {
            token_ids: vec![4, EOS_ID],
            log_prob: -2.0,
            finished: true,
            forced: false,
        };
        let long = Hypothesis {
            token_ids: vec![4, 4, 4, EOS_ID],
            log_prob: -2.0,
            finished: true,
            forced: false,
        };
        assert!(normalized_score(&long).unwrap() > normalized_score(&short).unwrap());
    }

    #[test]
    fn n_best_sorted_and_distinct() {
        let model = tiny_model(5);
        let nb = beam_search(&model, &[3, 4], 4, 2, 6).unwrap();
        assert!(nb.hypotheses.len() <= 2);
        let scores = nb.scores();
        for w in scores.windows(2) {
            assert!(w[0] >= w[1]);
        }
        if nb.hypotheses.len() == 2 {
            assert_ne!(nb.hypotheses[0].token_ids, nb.hypotheses[1].token_ids);
        }
    }

    #[test]
    fn log_prob_matches_teacher_forcing() {
        let model = tiny_model(7);
        let nb = beam_search(&model, &[3, 4, 3], 4, 4, 6).unwrap();
        for h in &nb.hypotheses {
            let lp = sequence_log_prob(&model, &[3, 4, 3], &h.token_ids).unwrap();
            assert!((lp - h.log_prob).abs() < 1e-10);
        }
    }

    /// Every target sequence up to `max_len`, EOS-terminated.
    fn enumerate_targets(vocab: usize, max_len: usize) -> Vec<Vec<u32>> {
        let tokens: Vec<u32> = (0..vocab as u32)
            .filter(|&t| t != PAD_ID && t != BOS_ID && t != EOS_ID)
            .collect();
        let mut out = vec![vec![EOS_ID]];
        let mut frontier: Vec<Vec<u32>> = vec![vec![]];
        for _ in 1..max_len {
            let mut next = Vec::new();
            for prefix in &frontier {
                for &t in &tokens {
                    let mut seq = prefix.clone();
                    seq.push(t);
                    let mut done = seq.clone();
                    done.push(EOS_ID);
                    out.push(done);
                    next.push(seq);
                }
            }
            frontier = next;
        }
        out
    }

    #[test]
    fn wide_beam_matches_exhaustive_enumeration() {
        // beam wide enough that nothing is ever pruned, so the result must be
        // the global argmax of the normalized score
        for seed in 0..5u64 {
            let model = tiny_model(100 + seed);
            let src = [4u32, 3];
            let max_len = 4;
            let best_brute = enumerate_targets(model.config.tgt_vocab, max_len)
                .into_iter()
                .map(|t| {
                    let lp = sequence_log_prob(&model, &src, &t).unwrap();
                    lp / t.len() as f64
                })
                .fold(f64::NEG_INFINITY, f64::max);
            let nb = beam_search(&model, &src, 64, 1, max_len).unwrap();
            let got = normalized_score(&nb.hypotheses[0]).unwrap();
            assert!(
                (got - best_brute).abs() < 1e-10,
                "seed {seed}: beam {got} vs brute force {best_brute}"
            );
        }
    }

    #[test]
    fn batch_matches_standalone_in_input_order() {
        let model = tiny_model(11);
        let sources: Vec<Vec<u32>> = vec![vec![4, 3, 4], vec![3], vec![4, 4], vec![3, 3, 3, 4]];
        let batch = batch_translate(&model, &sources, 3, 2);
        for (src, got) in sources.iter().zip(&batch) {
            let solo = beam_search(
                &model,
                src,
                3,
                2,
                synthesis_max_len(model.config.max_len, src.len()),
            )
            .unwrap();
            let got = got.as_ref().unwrap();
            assert_eq!(got.source_ids, *src);
            for (a, b) in got.hypotheses.iter().zip(&solo.hypotheses) {
                assert_eq!(a.token_ids, b.token_ids);
                assert!((a.log_prob - b.log_prob).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn per_sentence_errors_are_isolated() {
        let model = tiny_model(13);
        let sources: Vec<Vec<u32>> = vec![vec![4], vec![99], vec![3]];
        let batch = batch_translate(&model, &sources, 2, 1);
        assert!(batch[0].is_ok());
        assert!(batch[1].is_err());
        assert!(batch[2].is_ok());
    }

    #[test]
    fn bad_arguments_rejected() {
        let model = tiny_model(17);
        assert!(matches!(
            beam_search(&model, &[3], 1, 2, 5),
            Err(BeamError::BadSizes { .. })
        ));
        assert!(matches!(
            beam_search(&model, &[3], 2, 1, 0),
            Err(BeamError::BadMaxLen)
        ));
    }
}
