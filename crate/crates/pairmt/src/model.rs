//! Attention-based GRU encoder-decoder.
//!
//! Architecture: a bi-directional GRU encoder producing annotation vectors
//! `h_t = [fwd_t; bwd_t]`, a GRU decoder whose state update consumes the
//! previous target embedding and the attention context, and a single-hidden-
//! layer feed-forward attention scorer that reads the decoder state *before*
//! the state update.
//!
//! GRU gate equations (per step, input `x`, previous state `h`):
//!
//! ```text
//! r  = sigmoid(Wr x + bwr + Ur h + bur)
//! u  = sigmoid(Wu x + bwu + Uu h + buu)
//! n  = tanh   (Wn x + bwn + r .* (Un h + bun))
//! h' = (1 - u) .* h + u .* n
//! ```
//!
//! The three input projections are stored fused as `wx` (`3h x d_in`) and the
//! three recurrent projections as `uh` (`3h x h`), gate order `[r, u, n]`.
//!
//! The decoder's initial state is `tanh(W_init bwd_1 + b_init)` where `bwd_1`
//! is the backward encoder state at the first source position.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{BOS_ID, EOS_ID};
use crate::tensor::{Graph, NodeId, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("token id {id} out of vocabulary (size {vocab})")]
    OutOfVocab { id: u32, vocab: usize },
    #[error("sequence length {len} outside 1..={max}")]
    BadLength { len: usize, max: usize },
    #[error("empty target sequence")]
    EmptyTarget,
    #[error("target must end with the end-of-sequence token")]
    MissingEos,
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub d_emb: usize,
    pub d_hidden: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    pub max_len: usize,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.d_emb == 0 || self.d_hidden == 0 || self.src_vocab == 0 || self.tgt_vocab == 0 {
            return Err(ModelError::BadLength {
                len: 0,
                max: self.max_len,
            });
        }
        Ok(())
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        // desk-scale defaults; the reference system used 256/1024 with 50K vocab
        ModelConfig {
            d_emb: 32,
            d_hidden: 64,
            src_vocab: 64,
            tgt_vocab: 64,
            max_len: 60,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GruParams {
    pub wx: Arc<Tensor>,
    pub uh: Arc<Tensor>,
    pub bw: Arc<Tensor>,
    pub bu: Arc<Tensor>,
}

/// All trainable tensors of one translation direction.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub src_emb: Arc<Tensor>,
    pub tgt_emb: Arc<Tensor>,
    pub enc_fwd: GruParams,
    pub enc_bwd: GruParams,
    pub dec: GruParams,
    pub att_h: Arc<Tensor>,
    pub att_z: Arc<Tensor>,
    pub att_b: Arc<Tensor>,
    pub att_v: Arc<Tensor>,
    pub init_w: Arc<Tensor>,
    pub init_b: Arc<Tensor>,
    pub out_w: Arc<Tensor>,
    pub out_b: Arc<Tensor>,
}

macro_rules! for_each_param {
    ($self:expr, $f:expr) => {{
        let f = &mut $f;
        f("src_emb", &$self.src_emb);
        f("tgt_emb", &$self.tgt_emb);
        f("enc_fwd.wx", &$self.enc_fwd.wx);
        f("enc_fwd.uh", &$self.enc_fwd.uh);
        f("enc_fwd.bw", &$self.enc_fwd.bw);
        f("enc_fwd.bu", &$self.enc_fwd.bu);
        f("enc_bwd.wx", &$self.enc_bwd.wx);
        f("enc_bwd.uh", &$self.enc_bwd.uh);
        f("enc_bwd.bw", &$self.enc_bwd.bw);
        f("enc_bwd.bu", &$self.enc_bwd.bu);
        f("dec.wx", &$self.dec.wx);
        f("dec.uh", &$self.dec.uh);
        f("dec.bw", &$self.dec.bw);
        f("dec.bu", &$self.dec.bu);
        f("att_h", &$self.att_h);
        f("att_z", &$self.att_z);
        f("att_b", &$self.att_b);
        f("att_v", &$self.att_v);
        f("init_w", &$self.init_w);
        f("init_b", &$self.init_b);
        f("out_w", &$self.out_w);
        f("out_b", &$self.out_b);
    }};
}

impl ModelParams {
    /// Named tensors in canonical order (the order used for gradient maps,
    /// optimizer state and checkpoints).
    pub fn named(&self) -> Vec<(&'static str, Arc<Tensor>)> {
        let mut out = Vec::with_capacity(22);
        for_each_param!(self, |name: &'static str, t: &Arc<Tensor>| {
            out.push((name, Arc::clone(t)))
        });
        out
    }

    pub fn named_mut(&mut self) -> Vec<(&'static str, &mut Arc<Tensor>)> {
        vec![
            ("src_emb", &mut self.src_emb),
            ("tgt_emb", &mut self.tgt_emb),
            ("enc_fwd.wx", &mut self.enc_fwd.wx),
            ("enc_fwd.uh", &mut self.enc_fwd.uh),
            ("enc_fwd.bw", &mut self.enc_fwd.bw),
            ("enc_fwd.bu", &mut self.enc_fwd.bu),
            ("enc_bwd.wx", &mut self.enc_bwd.wx),
            ("enc_bwd.uh", &mut self.enc_bwd.uh),
            ("enc_bwd.bw", &mut self.enc_bwd.bw),
            ("enc_bwd.bu", &mut self.enc_bwd.bu),
            ("dec.wx", &mut self.dec.wx),
            ("dec.uh", &mut self.dec.uh),
            ("dec.bw", &mut self.dec.bw),
            ("dec.bu", &mut self.dec.bu),
            ("att_h", &mut self.att_h),
            ("att_z", &mut self.att_z),
            ("att_b", &mut self.att_b),
            ("att_v", &mut self.att_v),
            ("init_w", &mut self.init_w),
            ("init_b", &mut self.init_b),
            ("out_w", &mut self.out_w),
            ("out_b", &mut self.out_b),
        ]
    }

    pub fn all_finite(&self) -> bool {
        let mut ok = true;
        for_each_param!(self, |_n: &'static str, t: &Arc<Tensor>| {
            ok &= t.is_finite()
        });
        ok
    }
}

/// Weight matrix entries drawn from `normal(0, 6/(rows+cols))`; used for every
/// weight matrix (biases are zero).
pub fn glorot_normal(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Tensor {
    let std = (6.0 / (rows + cols) as f64).sqrt();
    let dist = Normal::new(0.0, std).unwrap();
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Tensor::from_vec(rows, cols, data)
}

fn gru_init(rng: &mut ChaCha12Rng, d_in: usize, h: usize) -> GruParams {
    GruParams {
        wx: Arc::new(glorot_normal(rng, 3 * h, d_in)),
        uh: Arc::new(glorot_normal(rng, 3 * h, h)),
        bw: Arc::new(Tensor::zeros(3 * h, 1)),
        bu: Arc::new(Tensor::zeros(3 * h, 1)),
    }
}

/// Deterministic parameter initialization for one direction.
pub fn init_params(config: &ModelConfig, seed: u64) -> ModelParams {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let (de, h) = (config.d_emb, config.d_hidden);
    let d_ctx = 2 * h;
    ModelParams {
        src_emb: Arc::new(glorot_normal(&mut rng, config.src_vocab, de)),
        tgt_emb: Arc::new(glorot_normal(&mut rng, config.tgt_vocab, de)),
        enc_fwd: gru_init(&mut rng, de, h),
        enc_bwd: gru_init(&mut rng, de, h),
        dec: gru_init(&mut rng, de + d_ctx, h),
        att_h: Arc::new(glorot_normal(&mut rng, h, d_ctx)),
        att_z: Arc::new(glorot_normal(&mut rng, h, h)),
        att_b: Arc::new(Tensor::zeros(h, 1)),
        att_v: Arc::new(glorot_normal(&mut rng, 1, h)),
        init_w: Arc::new(glorot_normal(&mut rng, h, h)),
        init_b: Arc::new(Tensor::zeros(h, 1)),
        out_w: Arc::new(glorot_normal(&mut rng, config.tgt_vocab, h + d_ctx + de)),
        out_b: Arc::new(Tensor::zeros(config.tgt_vocab, 1)),
    }
}

/// One translation direction: configuration plus parameters.
#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ModelParams,
}

impl Model {
    pub fn init(config: ModelConfig, seed: u64) -> Model {
        let params = init_params(&config, seed);
        Model { config, params }
    }

    /// Starts a forward session. `trainable` controls whether parameter
    /// leaves participate in backward.
    pub fn session(&self, trainable: bool) -> Session<'_> {
        let mut graph = Graph::new();
        let mut ids = Vec::with_capacity(22);
        for (_, t) in self.params.named() {
            ids.push(graph.leaf(t, trainable));
        }
        let b = BoundParams::from_ids(&ids);
        Session {
            model: self,
            graph,
            bound: b,
            param_ids: ids,
        }
    }
}

struct BoundGru {
    wx: NodeId,
    uh: NodeId,
    bw: NodeId,
    bu: NodeId,
}

struct BoundParams {
    src_emb: NodeId,
    tgt_emb: NodeId,
    enc_fwd: BoundGru,
    enc_bwd: BoundGru,
    dec: BoundGru,
    att_h: NodeId,
    att_z: NodeId,
    att_b: NodeId,
    att_v: NodeId,
    init_w: NodeId,
    init_b: NodeId,
    out_w: NodeId,
    out_b: NodeId,
}

impl BoundParams {
    fn from_ids(ids: &[NodeId]) -> BoundParams {
        BoundParams {
            src_emb: ids[0],
            tgt_emb: ids[1],
            enc_fwd: BoundGru {
                wx: ids[2],
                uh: ids[3],
                bw: ids[4],
                bu: ids[5],
            },
            enc_bwd: BoundGru {
                wx: ids[6],
                uh: ids[7],
                bw: ids[8],
                bu: ids[9],
            },
            dec: BoundGru {
                wx: ids[10],
                uh: ids[11],
                bw: ids[12],
                bu: ids[13],
            },
            att_h: ids[14],
            att_z: ids[15],
            att_b: ids[16],
            att_v: ids[17],
            init_w: ids[18],
            init_b: ids[19],
            out_w: ids[20],
            out_b: ids[21],
        }
    }
}

/// Encoder output: annotation vectors plus cached attention projections.
pub struct EncodedSource {
    /// `h_t = [fwd_t; bwd_t]`, each `2h x 1`.
    pub annotations: Vec<NodeId>,
    /// The same annotations stacked as a `2h x T` matrix.
    pub annotation_mat: NodeId,
    /// Source length T.
    pub len: usize,
    /// `att_h . h_t + att_b`, computed once per sentence.
    att_proj: Vec<NodeId>,
    /// Backward encoder state at the first source position.
    bwd_first: NodeId,
}

pub struct DecodeStep {
    pub state: NodeId,
    pub context: NodeId,
    /// Log-probabilities over the target vocabulary (`|Vt| x 1`).
    pub log_probs: NodeId,
}

/// A per-sentence (or per-batch) forward pass over one model's parameters.
pub struct Session<'m> {
    pub model: &'m Model,
    pub graph: Graph,
    bound: BoundParams,
    param_ids: Vec<NodeId>,
}

impl<'m> Session<'m> {
    fn gru_step(&mut self, gru: &'static str, x: NodeId, h: NodeId) -> NodeId {
        let dh = self.model.config.d_hidden;
        let b = match gru {
            "enc_fwd" => &self.bound.enc_fwd,
            "enc_bwd" => &self.bound.enc_bwd,
            _ => &self.bound.dec,
        };
        let (wx, uh, bw, bu) = (b.wx, b.uh, b.bw, b.bu);
        let g = &mut self.graph;
        let gx = g.matmul(wx, x);
        let gx = g.add(gx, bw);
        let gh = g.matmul(uh, h);
        let gh = g.add(gh, bu);
        let r_in = {
            let a = g.slice(gx, 0, dh);
            let b2 = g.slice(gh, 0, dh);
            g.add(a, b2)
        };
        let r = g.sigmoid(r_in);
        let u_in = {
            let a = g.slice(gx, dh, dh);
            let b2 = g.slice(gh, dh, dh);
            g.add(a, b2)
        };
        let u = g.sigmoid(u_in);
        let n_in = {
            let a = g.slice(gx, 2 * dh, dh);
            let hh = g.slice(gh, 2 * dh, dh);
            let gated = g.mul(r, hh);
            g.add(a, gated)
        };
        let n = g.tanh(n_in);
        let neg_u = g.mul_scalar(u, -1.0);
        let one_minus_u = g.add_scalar(neg_u, 1.0);
        let keep = g.mul(one_minus_u, h);
        let add = g.mul(u, n);
        g.add(keep, add)
    }

    /// Bi-directional encoding of a source id sequence.
    pub fn encode(&mut self, source_ids: &[u32]) -> Result<EncodedSource, ModelError> {
        let cfg = self.model.config;
        let t_len = source_ids.len();
        if t_len == 0 || t_len > cfg.max_len {
            return Err(ModelError::BadLength {
                len: t_len,
                max: cfg.max_len,
            });
        }
        for &id in source_ids {
            if id as usize >= cfg.src_vocab {
                return Err(ModelError::OutOfVocab {
                    id,
                    vocab: cfg.src_vocab,
                });
            }
        }
        let embeds: Vec<NodeId> = source_ids
            .iter()
            .map(|&id| {
                let m = self.bound.src_emb;
                self.graph.embed_row(m, id as usize)
            })
            .collect();

        let h0 = self.graph.constant(Tensor::zeros(cfg.d_hidden, 1));
        let mut fwd = Vec::with_capacity(t_len);
        let mut h = h0;
        for &x in &embeds {
            h = self.gru_step("enc_fwd", x, h);
            fwd.push(h);
        }
        let mut bwd = vec![h0; t_len];
        let mut hb = h0;
        for t in (0..t_len).rev() {
            hb = self.gru_step("enc_bwd", embeds[t], hb);
            bwd[t] = hb;
        }

        let mut annotations = Vec::with_capacity(t_len);
        let mut att_proj = Vec::with_capacity(t_len);
        for t in 0..t_len {
            let h_t = self.graph.concat(&[fwd[t], bwd[t]]);
            let p = self.graph.matmul(self.bound.att_h, h_t);
            let p = self.graph.add(p, self.bound.att_b);
            annotations.push(h_t);
            att_proj.push(p);
        }
        let annotation_mat = self.graph.hstack(&annotations);
        Ok(EncodedSource {
            annotations,
            annotation_mat,
            len: t_len,
            att_proj,
            bwd_first: bwd[0],
        })
    }

    /// Initial decoder state from the encoder's final backward state.
    pub fn init_state(&mut self, enc: &EncodedSource) -> NodeId {
        let g = &mut self.graph;
        let a = g.matmul(self.bound.init_w, enc.bwd_first);
        let a = g.add(a, self.bound.init_b);
        g.tanh(a)
    }

    /// Attention weights for a decoder state (a proper distribution over
    /// source positions), plus the mixed context vector.
    pub fn attention(&mut self, state: NodeId, enc: &EncodedSource) -> (NodeId, NodeId) {
        let q = {
            let g = &mut self.graph;
            g.matmul(self.bound.att_z, state)
        };
        let mut scores = Vec::with_capacity(enc.len);
        for t in 0..enc.len {
            let g = &mut self.graph;
            let s = g.add(enc.att_proj[t], q);
            let s = g.tanh(s);
            scores.push(g.matmul(self.bound.att_v, s));
        }
        let g = &mut self.graph;
        let score_vec = g.concat(&scores);
        let alpha = g.softmax(score_vec);
        let context = g.matmul(enc.annotation_mat, alpha);
        (alpha, context)
    }

    /// One decoder step: attention on the previous state, GRU state update,
    /// then output log-probabilities conditioned on the new state.
    pub fn decode_step(
        &mut self,
        prev_state: NodeId,
        prev_token: u32,
        enc: &EncodedSource,
    ) -> DecodeStep {
        let (_, context) = self.attention(prev_state, enc);
        let emb = self
            .graph
            .embed_row(self.bound.tgt_emb, prev_token as usize);
        let x = self.graph.concat(&[emb, context]);
        let state = self.gru_step("dec", x, prev_state);
        let g = &mut self.graph;
        let feat = g.concat(&[state, context, emb]);
        let logits = g.matmul(self.bound.out_w, feat);
        let logits = g.add(logits, self.bound.out_b);
        let log_probs = g.log_softmax(logits);
        DecodeStep {
            state,
            context,
            log_probs,
        }
    }

    /// Teacher-forced log-probability of `target_ids` given `source_ids`.
    /// The target must end with EOS; decoding starts from BOS.
    pub fn sequence_log_prob_node(
        &mut self,
        source_ids: &[u32],
        target_ids: &[u32],
    ) -> Result<NodeId, ModelError> {
        if target_ids.is_empty() {
            return Err(ModelError::EmptyTarget);
        }
        if *target_ids.last().unwrap() != EOS_ID {
            return Err(ModelError::MissingEos);
        }
        if target_ids.len() > self.model.config.max_len + 1 {
            return Err(ModelError::BadLength {
                len: target_ids.len(),
                max: self.model.config.max_len + 1,
            });
        }
        for &id in target_ids {
            if id as usize >= self.model.config.tgt_vocab {
                return Err(ModelError::OutOfVocab {
                    id,
                    vocab: self.model.config.tgt_vocab,
                });
            }
        }
        let enc = self.encode(source_ids)?;
        let mut state = self.init_state(&enc);
        let mut prev = BOS_ID;
        let mut terms = Vec::with_capacity(target_ids.len());
        for &gold in target_ids {
            let step = self.decode_step(state, prev, &enc);
            terms.push(self.graph.slice(step.log_probs, gold as usize, 1));
            state = step.state;
            prev = gold;
        }
        let stacked = self.graph.concat(&terms);
        Ok(self.graph.sum(stacked))
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        self.graph.value(id)
    }

    pub fn scalar(&self, id: NodeId) -> f64 {
        self.graph.value(id)[0]
    }

    /// Backward from a scalar loss; returns gradients aligned with
    /// [`ModelParams::named`] order.
    pub fn param_grads(&self, loss: NodeId) -> Result<Vec<Tensor>, ModelError> {
        let grads = self.graph.backward(loss)?;
        Ok(self
            .param_ids
            .iter()
            .map(|&id| grads.tensor_or_zeros(&self.graph, id))
            .collect())
    }
}

/// Convenience wrapper computing the teacher-forced log-probability as a value.
pub fn sequence_log_prob(
    model: &Model,
    source_ids: &[u32],
    target_ids: &[u32],
) -> Result<f64, ModelError> {
    let mut sess = model.session(false);
    let node = sess.sequence_log_prob_node(source_ids, target_ids)?;
    Ok(sess.scalar(node))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            d_emb: 4,
            d_hidden: 6,
            src_vocab: 7,
            tgt_vocab: 7,
            max_len: 10,
        }
    }

    #[test]
    fn init_is_deterministic_and_biases_zero() {
        let cfg = tiny_config();
        let a = init_params(&cfg, 42);
        let b = init_params(&cfg, 42);
        for ((_, ta), (_, tb)) in a.named().iter().zip(b.named().iter()) {
            assert_eq!(ta.data, tb.data);
        }
        assert!(a.enc_fwd.bw.data.iter().all(|v| *v == 0.0));
        assert!(a.att_b.data.iter().all(|v| *v == 0.0));
        assert!(a.out_b.data.iter().all(|v| *v == 0.0));
        let c = init_params(&cfg, 43);
        assert_ne!(a.src_emb.data, c.src_emb.data);
    }

    #[test]
    fn glorot_variance_matches_formula() {
        // 4x4 matrices: target variance 6/8 = 0.75, within 20% over many draws
        let mut sum_sq = 0.0;
        let mut n = 0usize;
        for seed in 0..200u64 {
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let t = glorot_normal(&mut rng, 4, 4);
            sum_sq += t.sq_norm();
            n += t.len();
        }
        let var = sum_sq / n as f64;
        assert!((var - 0.75).abs() < 0.15, "empirical variance {var}");
    }

    #[test]
    fn encode_shapes_and_errors() {
        let model = Model::init(tiny_config(), 1);
        let mut sess = model.session(false);
        let enc = sess.encode(&[4]).unwrap();
        assert_eq!(enc.len, 1);
        assert_eq!(sess.graph.shape(enc.annotations[0]), (12, 1));
        assert!(matches!(
            model.session(false).encode(&[]),
            Err(ModelError::BadLength { .. })
        ));
        assert!(matches!(
            model.session(false).encode(&[9]),
            Err(ModelError::OutOfVocab { .. })
        ));
    }

    #[test]
    fn reversed_input_swaps_direction_roles() {
        // forward states of the reversed input equal backward states of the
        // original if the two chains share weights; verify by recomputing the
        // forward chain on the reversed sequence with a model whose enc_bwd
        // equals enc_fwd.
        let cfg = tiny_config();
        let mut model = Model::init(cfg, 7);
        model.params.enc_bwd = model.params.enc_fwd.clone();
        let ids = [3u32, 4, 5, 6];
        let rev: Vec<u32> = ids.iter().rev().cloned().collect();

        let mut s1 = model.session(false);
        let e1 = s1.encode(&ids).unwrap();
        let mut s2 = model.session(false);
        let e2 = s2.encode(&rev).unwrap();

        let t_len = ids.len();
        for t in 0..t_len {
            // annotation = [fwd; bwd]; fwd half of e1 at t vs bwd half of e2 at mirrored t
            let a1 = s1.value(e1.annotations[t]);
            let a2 = s2.value(e2.annotations[t_len - 1 - t]);
            let h = cfg.d_hidden;
            for i in 0..h {
                assert!((a1[i] - a2[h + i]).abs() < 1e-12);
                assert!((a1[h + i] - a2[i]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn attention_is_a_distribution_and_single_source_context() {
        let model = Model::init(tiny_config(), 3);
        let mut sess = model.session(false);
        let enc = sess.encode(&[1, 2, 3]).unwrap();
        let state = sess.init_state(&enc);
        let (alpha, _) = sess.attention(state, &enc);
        let a = sess.value(alpha);
        assert!(a.iter().all(|v| *v > 0.0));
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-10);

        // single-token source forces weight 1 and context == h_1
        let mut sess = model.session(false);
        let enc = sess.encode(&[5]).unwrap();
        let state = sess.init_state(&enc);
        let (alpha, ctx) = sess.attention(state, &enc);
        assert!((sess.value(alpha)[0] - 1.0).abs() < 1e-12);
        let h1 = sess.value(enc.annotations[0]).to_vec();
        for (c, h) in sess.value(ctx).iter().zip(&h1) {
            assert!((c - h).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_attention_for_identical_annotations() {
        // a source of one repeated token yields identical annotations at
        // every position except through the recurrence; instead check the
        // symmetric case directly: equal att_proj entries give uniform alpha.
        let model = Model::init(tiny_config(), 5);
        let mut sess = model.session(false);
        let enc = sess.encode(&[2, 2, 2]).unwrap();
        // overwrite projections with copies of the first one
        let p0 = enc.att_proj[0];
        let enc_same = EncodedSource {
            att_proj: vec![p0; enc.len],
            ..enc
        };
        let state = sess.init_state(&enc_same);
        let (alpha, _) = sess.attention(state, &enc_same);
        for v in sess.value(alpha) {
            assert!((v - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn decode_step_log_probs_normalize() {
        let model = Model::init(tiny_config(), 11);
        let mut sess = model.session(false);
        let enc = sess.encode(&[1, 2]).unwrap();
        let state = sess.init_state(&enc);
        let step = sess.decode_step(state, BOS_ID, &enc);
        let total: f64 = sess.value(step.log_probs).iter().map(|lp| lp.exp()).sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn sequence_log_prob_composes_step_probs() {
        let model = Model::init(tiny_config(), 13);
        let src = [4u32, 5, 6];
        let tgt = [3u32, 4, EOS_ID];
        let total = sequence_log_prob(&model, &src, &tgt).unwrap();
        assert!(total <= 0.0);

        let mut sess = model.session(false);
        let enc = sess.encode(&src).unwrap();
        let mut state = sess.init_state(&enc);
        let mut prev = BOS_ID;
        let mut sum = 0.0;
        for &gold in &tgt {
            let step = sess.decode_step(state, prev, &enc);
            sum += sess.value(step.log_probs)[gold as usize];
            state = step.state;
            prev = gold;
        }
        assert!((sum - total).abs() < 1e-12);
    }

    #[test]
    fn zero_params_give_uniform_predictions() {
        let cfg = tiny_config();
        let mut model = Model::init(cfg, 17);
        for (_, t) in model.params.named_mut() {
            let z = Tensor::zeros(t.rows, t.cols);
            *t = Arc::new(z);
        }
        let tgt = [3u32, 4, EOS_ID];
        let lp = sequence_log_prob(&model, &[1, 2], &tgt).unwrap();
        let expect = tgt.len() as f64 * (1.0 / cfg.tgt_vocab as f64).ln();
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn target_errors() {
        let model = Model::init(tiny_config(), 19);
        assert!(matches!(
            sequence_log_prob(&model, &[1], &[]),
            Err(ModelError::EmptyTarget)
        ));
        assert!(matches!(
            sequence_log_prob(&model, &[1], &[3, 4]),
            Err(ModelError::MissingEos)
        ));
    }
}
