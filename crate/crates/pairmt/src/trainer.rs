//! Weighted maximum-likelihood training: batch loss, global-norm gradient
//! clipping, Adadelta updates and the epoch loop with dev-based selection.
//!
//! The batch loss is the mean over sentences of `weight * (-log p(y|x))`;
//! with all weights 1 this is exactly the MLE objective restricted to the
//! batch. Weights multiply per-sentence log-likelihoods, not per-token terms.

use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Model, ModelError, ModelParams};
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("weight {0} outside (0, 1]")]
    BadWeight(f64),
    #[error("empty sequence in training pair")]
    EmptySequence,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("non-finite gradient (global norm {0})")]
    NonFiniteGradient(f64),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One training example: id sequences plus a weight in (0, 1].
/// True bitext has weight 1; `target_ids` must end with EOS.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPair {
    pub source_ids: Vec<u32>,
    pub target_ids: Vec<u32>,
    pub weight: f64,
}

impl WeightedPair {
    pub fn new(source_ids: Vec<u32>, target_ids: Vec<u32>, weight: f64) -> Result<Self, TrainError> {
        if !(weight > 0.0 && weight <= 1.0) {
            return Err(TrainError::BadWeight(weight));
        }
        if source_ids.is_empty() || target_ids.is_empty() {
            return Err(TrainError::EmptySequence);
        }
        Ok(WeightedPair {
            source_ids,
            target_ids,
            weight,
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub clip_norm: f64,
    pub max_epochs: usize,
    /// Number of consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub rho: f64,
    pub eps: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        // reference values: batch 128, clip 2.0; desk-scale batch 16
        TrainConfig {
            batch_size: 16,
            clip_norm: 2.0,
            max_epochs: 10,
            patience: 3,
            rho: 0.95,
            eps: 1e-6,
            seed: 0,
        }
    }
}

/// splitmix64 scramble for deriving per-stage RNG seeds.
pub fn mix_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Mean over the batch of `weight * (-log p(target|source))`, as a scalar
/// tensor.
pub fn batch_loss(model: &Model, batch: &[WeightedPair]) -> Result<Tensor, TrainError> {
    let (loss, _) = batch_loss_values(model, batch)?;
    Ok(Tensor::scalar(loss))
}

fn batch_loss_values(model: &Model, batch: &[WeightedPair]) -> Result<(f64, Vec<f64>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let log_probs: Vec<Result<f64, ModelError>> = batch
        .par_iter()
        .map(|p| crate::model::sequence_log_prob(model, &p.source_ids, &p.target_ids))
        .collect();
    let mut total = 0.0;
    let mut per_pair = Vec::with_capacity(batch.len());
    for (p, lp) in batch.iter().zip(log_probs) {
        let lp = lp?;
        let term = p.weight * (-lp);
        per_pair.push(term);
        total += term;
    }
    Ok((total / batch.len() as f64, per_pair))
}

/// Batch loss plus gradients (aligned with `ModelParams::named` order).
/// Per-sentence graphs run concurrently; accumulation is sequential in
/// input order, so results are deterministic.
pub fn batch_loss_and_grads(
    model: &Model,
    batch: &[WeightedPair],
) -> Result<(f64, Vec<Tensor>), TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let k = batch.len() as f64;
    let results: Vec<Result<(f64, Vec<Tensor>), ModelError>> = batch
        .par_iter()
        .map(|p| {
            let mut sess = model.session(true);
            let lp = sess.sequence_log_prob_node(&p.source_ids, &p.target_ids)?;
            let loss = sess.graph.mul_scalar(lp, -p.weight / k);
            let grads = sess.param_grads(loss)?;
            Ok((sess.scalar(loss), grads))
        })
        .collect();

    let mut loss = 0.0;
    let mut acc: Option<Vec<Tensor>> = None;
    for r in results {
        let (l, g) = r?;
        loss += l;
        match &mut acc {
            None => acc = Some(g),
            Some(acc) => {
                for (a, gi) in acc.iter_mut().zip(&g) {
                    for (x, y) in a.data.iter_mut().zip(&gi.data) {
                        *x += y;
                    }
                }
            }
        }
    }
    Ok((loss, acc.expect("non-empty batch")))
}

/// Rescales all gradients by `clip_norm / norm` when the global L2 norm
/// exceeds `clip_norm`. Returns the pre-clip norm.
pub fn clip_gradients(grads: &mut [Tensor], clip_norm: f64) -> Result<f64, TrainError> {
    assert!(clip_norm > 0.0, "clip_norm must be positive");
    let sq: f64 = grads.iter().map(|g| g.sq_norm()).sum();
    let norm = sq.sqrt();
    if !norm.is_finite() {
        return Err(TrainError::NonFiniteGradient(norm));
    }
    if norm > clip_norm {
        let scale = clip_norm / norm;
        for g in grads.iter_mut() {
            for v in g.data.iter_mut() {
                *v *= scale;
            }
        }
    }
    Ok(norm)
}

/// Adadelta accumulators: decayed averages of squared gradients and squared
/// updates, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub rho: f64,
    pub eps: f64,
    avg_sq_grad: Vec<Tensor>,
    avg_sq_update: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(params: &ModelParams, rho: f64, eps: f64) -> Self {
        let zeros: Vec<Tensor> = params
            .named()
            .iter()
            .map(|(_, t)| Tensor::zeros(t.rows, t.cols))
            .collect();
        OptimizerState {
            rho,
            eps,
            avg_sq_grad: zeros.clone(),
            avg_sq_update: zeros,
        }
    }

    /// One Adadelta update:
    /// `Eg = rho Eg + (1-rho) g^2`, `dx = -sqrt(Ex+eps)/sqrt(Eg+eps) * g`,
    /// `Ex = rho Ex + (1-rho) dx^2`, `p += dx`.
    pub fn step(&mut self, params: &mut ModelParams, grads: &[Tensor]) {
        let (rho, eps) = (self.rho, self.eps);
        for (((slot, grad), eg), ex) in params
            .named_mut()
            .into_iter()
            .zip(grads)
            .zip(&mut self.avg_sq_grad)
            .zip(&mut self.avg_sq_update)
        {
            let (_, tensor) = slot;
            let p = Arc::make_mut(tensor);
            for i in 0..p.data.len() {
                let g = grad.data[i];
                eg.data[i] = rho * eg.data[i] + (1.0 - rho) * g * g;
                let dx = -((ex.data[i] + eps).sqrt() / (eg.data[i] + eps).sqrt()) * g;
                ex.data[i] = rho * ex.data[i] + (1.0 - rho) * dx * dx;
                p.data[i] += dx;
            }
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub dev_metric: f64,
    pub wall_ms: u128,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Checkpoint maximizing the dev callback.
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    /// True when training stopped on a non-finite loss or gradient.
    pub aborted: bool,
}

/// Epoch loop of shuffled mini-batches with clipping, Adadelta updates and
/// early stopping on the dev metric (higher is better).
pub fn train(
    model: &mut Model,
    corpus: &[WeightedPair],
    dev: &mut dyn FnMut(&Model) -> f64,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if corpus.is_empty() {
        return Err(TrainError::EmptyCorpus);
    }
    let mut opt = OptimizerState::new(&model.params, config.rho, config.eps);
    let mut best_params = model.params.clone();
    let mut best_metric = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut bad_epochs = 0usize;
    let mut history = Vec::new();
    let mut aborted = false;

    'epochs: for epoch in 0..config.max_epochs {
        let start = Instant::now();
        let mut order: Vec<usize> = (0..corpus.len()).collect();
        let mut rng = ChaCha12Rng::seed_from_u64(mix_seed(config.seed, epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<WeightedPair> = chunk.iter().map(|&i| corpus[i].clone()).collect();
            let (loss, mut grads) = batch_loss_and_grads(model, &batch)?;
            if !loss.is_finite() {
                aborted = true;
                break 'epochs;
            }
            if clip_gradients(&mut grads, config.clip_norm).is_err() {
                aborted = true;
                break 'epochs;
            }
            opt.step(&mut model.params, &grads);
            loss_sum += loss * batch.len() as f64;
        }

        let mean_loss = loss_sum / corpus.len() as f64;
        let metric = dev(model);
        history.push(EpochRecord {
            epoch,
            mean_loss,
            dev_metric: metric,
            wall_ms: start.elapsed().as_millis(),
        });

        if metric > best_metric {
            best_metric = metric;
            best_params = model.params.clone();
            best_epoch = epoch;
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs > config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        best_params,
        best_epoch,
        history,
        aborted,
    })
}
