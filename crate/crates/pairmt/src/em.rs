//! Joint EM over a pair of translation models. The E-step back-translates
//! monolingual sentences with the reverse-direction model and turns the
//! n-best lists into weighted pseudo-parallel data; the M-step retrains each
//! model on true bitext plus the pseudo corpus built for it. Both E-steps of
//! an iteration read the models frozen at the previous iteration.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{batch_translate, Hypothesis, NBestList};
use crate::bleu::{corpus_bleu, select_best, BleuError, BleuReport};
use crate::checkpoint::{Checkpoint, CheckpointError, SeedLineage};
use crate::corpus::{
    write_weighted, CorpusError, ParallelCorpus, Sentence, Vocabulary, EOS_ID,
};
use crate::model::{sequence_log_prob, Model, ModelConfig};
use crate::trainer::{mix_seed, train, EpochRecord, TrainConfig, TrainError, WeightedPair};

#[derive(Debug, Error)]
pub enum EmError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Bleu(#[from] BleuError),
    #[error("no monolingual data for direction {0}")]
    NoMono(&'static str),
    #[error("checkpoint for iteration {0} not found at {1}")]
    MissingIteration(usize, PathBuf),
}

/// Which way a model translates. `SrcToTgt` consumes source-language text and
/// produces target-language text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    SrcToTgt,
    TgtToSrc,
}

impl Direction {
    pub fn name(self) -> &'static str {
        match self {
            Direction::SrcToTgt => "s2t",
            Direction::TgtToSrc => "t2s",
        }
    }

    pub fn reverse(self) -> Direction {
        match self {
            Direction::SrcToTgt => Direction::TgtToSrc,
            Direction::TgtToSrc => Direction::SrcToTgt,
        }
    }

    fn index(self) -> u64 {
        match self {
            Direction::SrcToTgt => 0,
            Direction::TgtToSrc => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Dev,
    Test,
}

/// Token-level task data shared by both directions.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub bitext: ParallelCorpus,
    pub mono_src: Vec<Sentence>,
    pub mono_tgt: Vec<Sentence>,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
}

fn encode_all(vocab: &Vocabulary, sentences: &[Sentence]) -> Vec<Vec<u32>> {
    sentences.iter().map(|s| vocab.encode(s)).collect()
}

impl TaskData {
    /// Builds vocabularies from the training-side text (bitext plus
    /// monolingual splits; dev/test tokens get no special treatment and may
    /// map to UNK).
    pub fn new(
        bitext: ParallelCorpus,
        mono_src: Vec<Sentence>,
        mono_tgt: Vec<Sentence>,
        dev: ParallelCorpus,
        test: ParallelCorpus,
        max_vocab: usize,
    ) -> Result<TaskData, CorpusError> {
        let src_vocab = crate::corpus::build_vocab(
            bitext.iter().map(|(s, _)| s).chain(mono_src.iter()),
            max_vocab,
        )?;
        let tgt_vocab = crate::corpus::build_vocab(
            bitext.iter().map(|(_, t)| t).chain(mono_tgt.iter()),
            max_vocab,
        )?;
        Ok(TaskData {
            src_vocab,
            tgt_vocab,
            bitext,
            mono_src,
            mono_tgt,
            dev,
            test,
        })
    }

    pub fn from_toy(data: &crate::corpus::ToyData) -> Result<TaskData, CorpusError> {
        TaskData::new(
            data.bitext.clone(),
            data.mono_src.clone(),
            data.mono_tgt.clone(),
            data.dev.clone(),
            data.test.clone(),
            usize::MAX,
        )
    }

    /// (input vocabulary, output vocabulary) for a direction.
    pub fn vocabs(&self, dir: Direction) -> (&Vocabulary, &Vocabulary) {
        match dir {
            Direction::SrcToTgt => (&self.src_vocab, &self.tgt_vocab),
            Direction::TgtToSrc => (&self.tgt_vocab, &self.src_vocab),
        }
    }

    /// Model configuration with vocabulary sizes bound to this task.
    pub fn model_config(&self, dir: Direction, base: &ModelConfig) -> ModelConfig {
        let (vin, vout) = self.vocabs(dir);
        ModelConfig {
            src_vocab: vin.len(),
            tgt_vocab: vout.len(),
            ..*base
        }
    }

    fn oriented(&self, pairs: &ParallelCorpus, dir: Direction) -> Vec<(Vec<u32>, Vec<u32>)> {
        let (vin, vout) = self.vocabs(dir);
        pairs
            .iter()
            .map(|(s, t)| match dir {
                Direction::SrcToTgt => (vin.encode(s), vout.encode(t)),
                Direction::TgtToSrc => (vin.encode(t), vout.encode(s)),
            })
            .collect()
    }

    /// True bitext as weight-1 training pairs (EOS appended to targets).
    pub fn bitext_pairs(&self, dir: Direction) -> Vec<WeightedPair> {
        id_pairs_to_weighted(self.oriented(&self.bitext, dir))
    }

    pub fn dev_pairs(&self, dir: Direction) -> Vec<WeightedPair> {
        id_pairs_to_weighted(self.oriented(&self.dev, dir))
    }

    /// Monolingual sentences in `dir`'s output language, encoded for the
    /// reverse model. Back-translating them yields pseudo sources for `dir`.
    pub fn mono_targets(&self, dir: Direction) -> Vec<Vec<u32>> {
        match dir {
            Direction::SrcToTgt => encode_all(&self.tgt_vocab, &self.mono_tgt),
            Direction::TgtToSrc => encode_all(&self.src_vocab, &self.mono_src),
        }
    }

    /// Decoder inputs and token-level references for BLEU.
    pub fn eval_inputs(&self, dir: Direction, split: Split) -> (Vec<Vec<u32>>, Vec<Vec<Sentence>>) {
        let pairs = match split {
            Split::Dev => &self.dev,
            Split::Test => &self.test,
        };
        let (vin, _) = self.vocabs(dir);
        let mut sources = Vec::with_capacity(pairs.len());
        let mut refs = Vec::with_capacity(pairs.len());
        for (s, t) in pairs {
            match dir {
                Direction::SrcToTgt => {
                    sources.push(vin.encode(s));
                    refs.push(vec![t.clone()]);
                }
                Direction::TgtToSrc => {
                    sources.push(vin.encode(t));
                    refs.push(vec![s.clone()]);
                }
            }
        }
        (sources, refs)
    }
}

fn id_pairs_to_weighted(pairs: Vec<(Vec<u32>, Vec<u32>)>) -> Vec<WeightedPair> {
    pairs
        .into_iter()
        .filter(|(s, t)| !s.is_empty() && !t.is_empty())
        .map(|(s, mut t)| {
            t.push(EOS_ID);
            WeightedPair::new(s, t, 1.0).expect("valid pair")
        })
        .collect()
}

/// Softmax over length-normalized scores; with one entry the weight is
/// exactly 1.
pub fn normalize_weights(scores: &[f64]) -> Vec<f64> {
    assert!(!scores.is_empty(), "empty score list");
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct EStepConfig {
    pub beam_size: usize,
    pub n_best: usize,
    /// Force every pseudo-pair weight to 1 (ablation; also the plain
    /// back-translation setting together with `n_best = 1`).
    pub weights_all_one: bool,
    /// Discard hypotheses whose EOS was forced at the length cap.
    pub drop_forced: bool,
}

impl Default for EStepConfig {
    fn default() -> Self {
        EStepConfig {
            beam_size: 4,
            n_best: 4,
            weights_all_one: false,
            drop_forced: false,
        }
    }
}

/// Pseudo pairs built from one monolingual sentence.
#[derive(Debug, Clone)]
pub struct PseudoGroup {
    pub mono_index: usize,
    pub pairs: Vec<WeightedPair>,
}

/// Weighted pseudo-parallel corpus. Unless weights were forced to 1, each
/// group's weights sum to 1.
#[derive(Debug, Clone, Default)]
pub struct PseudoCorpus {
    pub groups: Vec<PseudoGroup>,
    /// Monolingual sentences that produced no usable hypothesis.
    pub skipped: usize,
}

impl PseudoCorpus {
    pub fn flatten(&self) -> Vec<WeightedPair> {
        self.groups.iter().flat_map(|g| g.pairs.clone()).collect()
    }

    pub fn num_pairs(&self) -> usize {
        self.groups.iter().map(|g| g.pairs.len()).sum()
    }

    pub fn mean_weight(&self) -> f64 {
        let n = self.num_pairs();
        if n == 0 {
            return 0.0;
        }
        self.groups
            .iter()
            .flat_map(|g| g.pairs.iter().map(|p| p.weight))
            .sum::<f64>()
            / n as f64
    }
}

fn usable_hypotheses(list: &NBestList, drop_forced: bool) -> Vec<&Hypothesis> {
    list.hypotheses
        .iter()
        .filter(|h| !(drop_forced && h.forced) && !h.surface_ids().is_empty())
        .collect()
}

/// Back-translates `mono` with the reverse model. Each hypothesis becomes a
/// pseudo pair whose source is the hypothesis surface and whose target is the
/// monolingual sentence; weights are the softmax of the surviving hypotheses'
/// length-normalized scores. Sentences yielding no usable hypothesis (decode
/// failure, empty surfaces, or all-forced under `drop_forced`) are skipped.
pub fn e_step(reverse: &Model, mono: &[Vec<u32>], cfg: &EStepConfig) -> PseudoCorpus {
    let results = batch_translate(reverse, mono, cfg.beam_size, cfg.n_best);
    let mut out = PseudoCorpus::default();
    for (i, res) in results.iter().enumerate() {
        let list = match res {
            Ok(l) => l,
            Err(_) => {
                out.skipped += 1;
                continue;
            }
        };
        let hyps = usable_hypotheses(list, cfg.drop_forced);
        if hyps.is_empty() {
            out.skipped += 1;
            continue;
        }
        let weights = if cfg.weights_all_one {
            vec![1.0; hyps.len()]
        } else {
            let scores: Vec<f64> = hyps
                .iter()
                .map(|h| crate::beam::normalized_score(h).expect("finished"))
                .collect();
            normalize_weights(&scores)
        };
        let mut target = mono[i].clone();
        target.push(EOS_ID);
        let pairs = hyps
            .iter()
            .zip(weights)
            .map(|(h, w)| {
                WeightedPair::new(h.surface_ids().to_vec(), target.clone(), w)
                    .expect("weights in (0,1]")
            })
            .collect();
        out.groups.push(PseudoGroup {
            mono_index: i,
            pairs,
        });
    }
    out
}

/// Retrains one model on true bitext plus its pseudo corpus, warm-starting
/// from the current parameters. Returns the epoch history; the model is left
/// at the dev-best parameters.
pub fn m_step(
    model: &mut Model,
    bitext: &[WeightedPair],
    pseudo: &[WeightedPair],
    dev: &mut dyn FnMut(&Model) -> f64,
    tc: &TrainConfig,
) -> Result<Vec<EpochRecord>, TrainError> {
    let mut corpus = bitext.to_vec();
    corpus.extend_from_slice(pseudo);
    let outcome = train(model, &corpus, dev, tc)?;
    model.params = outcome.best_params;
    Ok(outcome.history)
}

/// Mean per-sentence teacher-forced log-probability; the cheap per-epoch dev
/// metric (higher is better).
pub fn dev_log_prob(model: &Model, pairs: &[WeightedPair]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs
        .par_iter()
        .map(|p| {
            sequence_log_prob(model, &p.source_ids, &p.target_ids).unwrap_or(f64::NEG_INFINITY)
        })
        .sum::<f64>()
        / pairs.len() as f64
}

/// Greedy-from-beam translations, decoded to tokens. Failed sentences come
/// back empty.
pub fn translate_sentences(
    model: &Model,
    sources: &[Vec<u32>],
    out_vocab: &Vocabulary,
    beam: usize,
) -> Vec<Sentence> {
    batch_translate(model, sources, beam, 1)
        .into_iter()
        .map(|r| match r {
            Ok(list) => out_vocab.decode(list.hypotheses[0].surface_ids()),
            Err(_) => Vec::new(),
        })
        .collect()
}

/// Corpus BLEU of one model on a split.
pub fn evaluate(
    model: &Model,
    data: &TaskData,
    dir: Direction,
    split: Split,
    beam: usize,
) -> Result<BleuReport, EmError> {
    let (sources, refs) = data.eval_inputs(dir, split);
    let (_, vout) = data.vocabs(dir);
    let hyps = translate_sentences(model, &sources, vout, beam);
    Ok(corpus_bleu(&hyps, &refs)?)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct EmConfig {
    /// EM iterations after pretraining (0 = baseline, bitext only).
    pub iterations: usize,
    pub e_step: EStepConfig,
    /// Reinitialize parameters before each M-step instead of warm-starting.
    pub cold_restart: bool,
    pub model: ModelConfig,
    pub pretrain: TrainConfig,
    pub m_step: TrainConfig,
    /// Beam width for dev/test decoding.
    pub eval_beam: usize,
    /// Master seed; all stage seeds derive from it.
    pub seed: u64,
}

impl Default for EmConfig {
    fn default() -> Self {
        // reference settings: 4-5 iterations, synthesis beam 4, test beam 8
        EmConfig {
            iterations: 3,
            e_step: EStepConfig::default(),
            cold_restart: false,
            model: ModelConfig::default(),
            pretrain: TrainConfig {
                max_epochs: 10,
                patience: 10,
                ..TrainConfig::default()
            },
            m_step: TrainConfig {
                max_epochs: 1,
                patience: 1,
                ..TrainConfig::default()
            },
            eval_beam: 8,
            seed: 0,
        }
    }
}

const INIT_SALT: u64 = 0xA11CE;

fn stage_seed(master: u64, iteration: usize, dir: Direction) -> u64 {
    mix_seed(master, 0x100 * (iteration as u64 + 1) + dir.index())
}

/// One line of `summary.jsonl`. Iteration 0 is pretraining (no pseudo data).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationSummary {
    pub iteration: usize,
    pub pseudo_s2t: usize,
    pub pseudo_t2s: usize,
    pub skipped_s2t: usize,
    pub skipped_t2s: usize,
    pub mean_weight_s2t: f64,
    pub mean_weight_t2s: f64,
    pub dev_bleu_s2t: f64,
    pub dev_bleu_t2s: f64,
}

#[derive(Debug)]
pub struct JointOutcome {
    /// Dev-best models over all iterations.
    pub s2t: Model,
    pub t2s: Model,
    pub best_iter_s2t: usize,
    pub best_iter_t2s: usize,
    pub summaries: Vec<IterationSummary>,
}

fn iter_dir(workdir: &Path, iteration: usize) -> PathBuf {
    workdir.join(format!("iter_{iteration}"))
}

fn ckpt_path(workdir: &Path, iteration: usize, dir: Direction) -> PathBuf {
    iter_dir(workdir, iteration).join(format!("{}.ckpt.json", dir.name()))
}

fn write_summaries(path: &Path, summaries: &[IterationSummary]) -> Result<(), EmError> {
    let mut text = String::new();
    for s in summaries {
        text.push_str(&serde_json::to_string(s).expect("summary serializes"));
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

fn read_summaries(path: &Path) -> Result<Vec<IterationSummary>, EmError> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines() {
        match serde_json::from_str::<IterationSummary>(line) {
            Ok(s) => out.push(s),
            Err(_) => break,
        }
    }
    Ok(out)
}

fn save_direction(
    workdir: &Path,
    iteration: usize,
    dir: Direction,
    model: &Model,
    data: &TaskData,
    cfg: &EmConfig,
) -> Result<(), EmError> {
    let (vin, vout) = data.vocabs(dir);
    let lineage = SeedLineage {
        master: cfg.seed,
        init: mix_seed(cfg.seed, INIT_SALT),
        shuffle: stage_seed(cfg.seed, iteration, dir),
    };
    Checkpoint::new(model, vin, vout, lineage).save(&ckpt_path(workdir, iteration, dir))?;
    Ok(())
}

fn load_direction(workdir: &Path, iteration: usize, dir: Direction) -> Result<Model, EmError> {
    let path = ckpt_path(workdir, iteration, dir);
    if !path.exists() {
        return Err(EmError::MissingIteration(iteration, path));
    }
    Ok(Checkpoint::load(&path)?.to_model()?)
}

fn decode_pseudo(
    pseudo: &PseudoCorpus,
    vin: &Vocabulary,
    vout: &Vocabulary,
) -> Vec<(f64, Sentence, Sentence)> {
    pseudo
        .groups
        .iter()
        .flat_map(|g| {
            g.pairs.iter().map(|p| {
                let tgt_no_eos = &p.target_ids[..p.target_ids.len() - 1];
                (p.weight, vin.decode(&p.source_ids), vout.decode(tgt_no_eos))
            })
        })
        .collect()
}

/// Pretrains both directions on the bitext alone, from a shared derived
/// init seed. Epoch-level dev selection uses teacher-forced dev log-prob.
pub fn pretrain(data: &TaskData, cfg: &EmConfig) -> Result<(Model, Model), EmError> {
    let init_seed = mix_seed(cfg.seed, INIT_SALT);
    let mut models = Vec::with_capacity(2);
    for dir in [Direction::SrcToTgt, Direction::TgtToSrc] {
        let mut model = Model::init(data.model_config(dir, &cfg.model), init_seed);
        let bitext = data.bitext_pairs(dir);
        let dev_pairs = data.dev_pairs(dir);
        let tc = TrainConfig {
            seed: stage_seed(cfg.seed, 0, dir),
            ..cfg.pretrain
        };
        let mut dev = |m: &Model| dev_log_prob(m, &dev_pairs);
        let outcome = train(&mut model, &bitext, &mut dev, &tc)?;
        model.params = outcome.best_params;
        models.push(model);
    }
    let t2s = models.pop().expect("two models");
    let s2t = models.pop().expect("two models");
    Ok((s2t, t2s))
}

/// Runs pretraining plus `cfg.iterations` EM iterations, writing per-iteration
/// checkpoints and pseudo corpora under `workdir` and one summary line per
/// iteration to `workdir/summary.jsonl`. Restarts resume after the last
/// iteration whose artifacts are complete; the returned models are the
/// dev-BLEU-best iteration per direction.
pub fn joint_train(workdir: &Path, data: &TaskData, cfg: &EmConfig) -> Result<JointOutcome, EmError> {
    std::fs::create_dir_all(workdir)?;
    let summary_path = workdir.join("summary.jsonl");

    let mut summaries: Vec<IterationSummary> = if summary_path.exists() {
        read_summaries(&summary_path)?
    } else {
        Vec::new()
    };
    // keep only the contiguous prefix whose checkpoints are all on disk
    let mut complete = 0usize;
    for (i, s) in summaries.iter().enumerate() {
        let ok = s.iteration == i
            && ckpt_path(workdir, i, Direction::SrcToTgt).exists()
            && ckpt_path(workdir, i, Direction::TgtToSrc).exists();
        if !ok {
            break;
        }
        complete = i + 1;
    }
    summaries.truncate(complete);

    let bitext_s2t = data.bitext_pairs(Direction::SrcToTgt);
    let bitext_t2s = data.bitext_pairs(Direction::TgtToSrc);
    let dev_pairs_s2t = data.dev_pairs(Direction::SrcToTgt);
    let dev_pairs_t2s = data.dev_pairs(Direction::TgtToSrc);
    let mono_for_s2t = data.mono_targets(Direction::SrcToTgt);
    let mono_for_t2s = data.mono_targets(Direction::TgtToSrc);

    let dev_bleu = |m: &Model, dir: Direction| -> Result<f64, EmError> {
        Ok(evaluate(m, data, dir, Split::Dev, cfg.eval_beam)?.bleu)
    };

    let (mut s2t, mut t2s);
    if complete == 0 {
        let (a, b) = pretrain(data, cfg)?;
        s2t = a;
        t2s = b;
        save_direction(workdir, 0, Direction::SrcToTgt, &s2t, data, cfg)?;
        save_direction(workdir, 0, Direction::TgtToSrc, &t2s, data, cfg)?;
        summaries.push(IterationSummary {
            iteration: 0,
            pseudo_s2t: 0,
            pseudo_t2s: 0,
            skipped_s2t: 0,
            skipped_t2s: 0,
            mean_weight_s2t: 0.0,
            mean_weight_t2s: 0.0,
            dev_bleu_s2t: dev_bleu(&s2t, Direction::SrcToTgt)?,
            dev_bleu_t2s: dev_bleu(&t2s, Direction::TgtToSrc)?,
        });
        write_summaries(&summary_path, &summaries)?;
        complete = 1;
    } else {
        s2t = load_direction(workdir, complete - 1, Direction::SrcToTgt)?;
        t2s = load_direction(workdir, complete - 1, Direction::TgtToSrc)?;
    }

    for k in complete..=cfg.iterations {
        if mono_for_s2t.is_empty() {
            return Err(EmError::NoMono(Direction::SrcToTgt.name()));
        }
        if mono_for_t2s.is_empty() {
            return Err(EmError::NoMono(Direction::TgtToSrc.name()));
        }
        // synchronous E-steps: both read the iteration k-1 models
        let pseudo_s2t = e_step(&t2s, &mono_for_s2t, &cfg.e_step);
        let pseudo_t2s = e_step(&s2t, &mono_for_t2s, &cfg.e_step);

        let dir_k = iter_dir(workdir, k);
        std::fs::create_dir_all(&dir_k)?;
        write_weighted(
            &dir_k.join("pseudo_s2t.tsv"),
            &decode_pseudo(&pseudo_s2t, &data.src_vocab, &data.tgt_vocab),
        )?;
        write_weighted(
            &dir_k.join("pseudo_t2s.tsv"),
            &decode_pseudo(&pseudo_t2s, &data.tgt_vocab, &data.src_vocab),
        )?;

        if cfg.cold_restart {
            let init_seed = mix_seed(cfg.seed, INIT_SALT);
            s2t = Model::init(s2t.config, init_seed);
            t2s = Model::init(t2s.config, init_seed);
        }
        let tc_s2t = TrainConfig {
            seed: stage_seed(cfg.seed, k, Direction::SrcToTgt),
            ..cfg.m_step
        };
        let tc_t2s = TrainConfig {
            seed: stage_seed(cfg.seed, k, Direction::TgtToSrc),
            ..cfg.m_step
        };
        let mut dev_a = |m: &Model| dev_log_prob(m, &dev_pairs_s2t);
        m_step(&mut s2t, &bitext_s2t, &pseudo_s2t.flatten(), &mut dev_a, &tc_s2t)?;
        let mut dev_b = |m: &Model| dev_log_prob(m, &dev_pairs_t2s);
        m_step(&mut t2s, &bitext_t2s, &pseudo_t2s.flatten(), &mut dev_b, &tc_t2s)?;

        save_direction(workdir, k, Direction::SrcToTgt, &s2t, data, cfg)?;
        save_direction(workdir, k, Direction::TgtToSrc, &t2s, data, cfg)?;
        summaries.push(IterationSummary {
            iteration: k,
            pseudo_s2t: pseudo_s2t.num_pairs(),
            pseudo_t2s: pseudo_t2s.num_pairs(),
            skipped_s2t: pseudo_s2t.skipped,
            skipped_t2s: pseudo_t2s.skipped,
            mean_weight_s2t: pseudo_s2t.mean_weight(),
            mean_weight_t2s: pseudo_t2s.mean_weight(),
            dev_bleu_s2t: dev_bleu(&s2t, Direction::SrcToTgt)?,
            dev_bleu_t2s: dev_bleu(&t2s, Direction::TgtToSrc)?,
        });
        write_summaries(&summary_path, &summaries)?;
    }

    let by_s2t: Vec<f64> = summaries.iter().map(|s| s.dev_bleu_s2t).collect();
    let by_t2s: Vec<f64> = summaries.iter().map(|s| s.dev_bleu_t2s).collect();
    let best_iter_s2t = select_best(&by_s2t).expect("at least pretraining");
    let best_iter_t2s = select_best(&by_t2s).expect("at least pretraining");
    Ok(JointOutcome {
        s2t: load_direction(workdir, best_iter_s2t, Direction::SrcToTgt)?,
        t2s: load_direction(workdir, best_iter_t2s, Direction::TgtToSrc)?,
        best_iter_s2t,
        best_iter_t2s,
        summaries,
    })
}
