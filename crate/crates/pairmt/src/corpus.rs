//! Vocabulary construction, corpus I/O, batching and deterministic toy-language
//! generation.
//!
//! Corpus files are UTF-8, one sentence per line, whitespace-separated tokens.
//! Parallel corpora are two aligned files. Weighted corpora are tab-separated
//! `(weight, source, target)` lines with the weight printed to 6 decimals.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const PAD_ID: u32 = 0;
pub const BOS_ID: u32 = 1;
pub const EOS_ID: u32 = 2;
pub const UNK_ID: u32 = 3;
pub const RESERVED: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<unk>"];

pub type Sentence = Vec<String>;
pub type ParallelCorpus = Vec<(Sentence, Sentence)>;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("empty corpus")]
    Empty,
    #[error("toy vocabulary must have at least 4 tokens, got {0}")]
    VocabTooSmall(usize),
    #[error("invalid weighted line {line}: {reason}")]
    BadWeightedLine { line: usize, reason: String },
    #[error("parallel files differ in length: {src} vs {tgt}")]
    UnalignedFiles { src: usize, tgt: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bidirectional token map with reserved ids 0..3 (PAD, BOS, EOS, UNK).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    #[serde(skip)]
    token_to_id: HashMap<String, u32>,
}

impl Vocabulary {
    fn from_tokens(tokens: Vec<String>) -> Vocabulary {
        let token_to_id = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Vocabulary {
            id_to_token: tokens,
            token_to_id,
        }
    }

    /// Rebuilds the reverse map after deserialization.
    pub fn rebuild_index(&mut self) {
        self.token_to_id = self
            .id_to_token
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.token_to_id.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.id_to_token[id as usize]
    }

    /// Total mapping: unknown tokens encode to UNK.
    pub fn encode(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn decode(&self, ids: &[u32]) -> Sentence {
        ids.iter().map(|&i| self.token(i).to_string()).collect()
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        write_lines_raw(path, self.id_to_token.iter().map(|s| s.as_str()))
    }

    pub fn load(path: &Path) -> Result<Vocabulary, CorpusError> {
        let text = fs::read_to_string(path)?;
        let tokens: Vec<String> = text.lines().map(|l| l.to_string()).collect();
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// Keeps the `max_size` most frequent tokens (ties broken lexicographically);
/// everything else maps to UNK.
pub fn build_vocab<'a, I>(sentences: I, max_size: usize) -> Result<Vocabulary, CorpusError>
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut any = false;
    for s in sentences {
        any = true;
        for t in s {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
    }
    if !any {
        return Err(CorpusError::Empty);
    }
    let mut by_freq: Vec<(&str, u64)> = counts.into_iter().collect();
    by_freq.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    by_freq.truncate(max_size);
    let mut tokens: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
    tokens.extend(by_freq.into_iter().map(|(t, _)| t.to_string()));
    Ok(Vocabulary::from_tokens(tokens))
}

/// Whitespace tokenization with lowercasing.
pub fn tokenize(line: &str) -> Sentence {
    line.split_whitespace()
        .map(|t| t.to_lowercase())
        .collect()
}

/// Drops parallel pairs where either side exceeds `max_len`. Returns the
/// filtered corpus and the drop count.
pub fn filter_pairs_by_length(pairs: &[(Sentence, Sentence)], max_len: usize) -> (ParallelCorpus, usize) {
    let kept: ParallelCorpus = pairs
        .iter()
        .filter(|(s, t)| s.len() <= max_len && t.len() <= max_len)
        .cloned()
        .collect();
    let dropped = pairs.len() - kept.len();
    (kept, dropped)
}

pub fn filter_mono_by_length(sentences: &[Sentence], max_len: usize) -> (Vec<Sentence>, usize) {
    let kept: Vec<Sentence> = sentences
        .iter()
        .filter(|s| s.len() <= max_len)
        .cloned()
        .collect();
    let dropped = sentences.len() - kept.len();
    (kept, dropped)
}

/// A batch of sentence indices into the original corpus plus the id rows
/// padded to the within-batch maximum with PAD.
#[derive(Debug, Clone)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub padded: Vec<Vec<u32>>,
}

/// With `sort_by_length`: stable length-sorted order then sequential batches
/// (decoding mode). Otherwise: seeded shuffle then sequential batches
/// (training mode).
pub fn make_batches(
    sentences: &[Vec<u32>],
    batch_size: usize,
    seed: u64,
    sort_by_length: bool,
) -> Vec<Batch> {
    assert!(batch_size >= 1);
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    if sort_by_length {
        order.sort_by_key(|&i| sentences[i].len());
    } else {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let max_len = chunk.iter().map(|&i| sentences[i].len()).max().unwrap_or(0);
            let padded = chunk
                .iter()
                .map(|&i| {
                    let mut row = sentences[i].clone();
                    row.resize(max_len, PAD_ID);
                    row
                })
                .collect();
            Batch {
                indices: chunk.to_vec(),
                padded,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ToyTransformKind {
    /// Bijective token substitution.
    Cipher,
    /// Substitution composed with swapping adjacent tokens at even positions.
    CipherReorder,
}

/// Generator settings for the synthetic two-language corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToySpec {
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub transform: ToyTransformKind,
    pub noise_rate: f64,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            vocab_size: 60,
            min_len: 3,
            max_len: 12,
            transform: ToyTransformKind::CipherReorder,
            noise_rate: 0.0,
            seed: 1,
        }
    }
}

/// The generating transformation; doubles as an exact oracle translator.
#[derive(Debug, Clone)]
pub struct ToyLanguage {
    pub spec: ToySpec,
    permutation: Vec<usize>,
}

impl ToyLanguage {
    pub fn new(spec: ToySpec) -> Result<ToyLanguage, CorpusError> {
        if spec.vocab_size < 4 {
            return Err(CorpusError::VocabTooSmall(spec.vocab_size));
        }
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed ^ 0x70795f6c616e67);
        let mut permutation: Vec<usize> = (0..spec.vocab_size).collect();
        permutation.shuffle(&mut rng);
        Ok(ToyLanguage { spec, permutation })
    }

    pub fn src_token(&self, i: usize) -> String {
        format!("s{i}")
    }

    pub fn tgt_token(&self, i: usize) -> String {
        format!("t{i}")
    }

    fn src_index(&self, token: &str) -> Option<usize> {
        token.strip_prefix('s').and_then(|n| n.parse().ok())
    }

    /// Noise-free source-to-target translation (the ground truth).
    pub fn translate(&self, src: &[String]) -> Sentence {
        let mut out: Sentence = src
            .iter()
            .map(|t| match self.src_index(t) {
                Some(i) if i < self.spec.vocab_size => self.tgt_token(self.permutation[i]),
                _ => RESERVED[UNK_ID as usize].to_string(),
            })
            .collect();
        if self.spec.transform == ToyTransformKind::CipherReorder {
            let mut i = 0;
            while i + 1 < out.len() {
                out.swap(i, i + 1);
                i += 2;
            }
        }
        out
    }
}

/// All splits of a generated toy experiment.
#[derive(Debug, Clone)]
pub struct ToyData {
    pub bitext: ParallelCorpus,
    pub mono_src: Vec<Sentence>,
    pub mono_tgt: Vec<Sentence>,
    pub dev: ParallelCorpus,
    pub test: ParallelCorpus,
    pub language: ToyLanguage,
}

/// Draws Zipf-distributed source sentences, partitions them into pairwise
/// disjoint splits and derives target sides via the toy transformation.
/// Monolingual splits keep only one side. Noise (random target-token
/// replacement) applies to the training bitext only.
pub fn generate_toy_corpus(
    spec: ToySpec,
    n_parallel: usize,
    n_mono_src: usize,
    n_mono_tgt: usize,
    n_dev: usize,
    n_test: usize,
) -> Result<ToyData, CorpusError> {
    let language = ToyLanguage::new(spec)?;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
    let zipf = Zipf::new(spec.vocab_size as u64, 1.0).expect("valid zipf");

    let total = n_parallel + n_mono_src + n_mono_tgt + n_dev + n_test;
    let mut seen: HashSet<Vec<u16>> = HashSet::with_capacity(total);
    let mut sources: Vec<Sentence> = Vec::with_capacity(total);
    while sources.len() < total {
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let ids: Vec<u16> = (0..len)
            .map(|_| (zipf.sample(&mut rng) as usize - 1) as u16)
            .collect();
        if seen.insert(ids.clone()) {
            sources.push(ids.iter().map(|&i| language.src_token(i as usize)).collect());
        }
    }

    let take = |n: usize, sources: &mut Vec<Sentence>| -> Vec<Sentence> {
        sources.drain(..n).collect()
    };
    let train_src = take(n_parallel, &mut sources);
    let mono_src = take(n_mono_src, &mut sources);
    let mono_tgt_src = take(n_mono_tgt, &mut sources);
    let dev_src = take(n_dev, &mut sources);
    let test_src = take(n_test, &mut sources);

    let noisy_translate = |src: &Sentence, rng: &mut ChaCha12Rng| -> Sentence {
        let mut tgt = language.translate(src);
        if spec.noise_rate > 0.0 {
            for t in tgt.iter_mut() {
                if rng.gen::<f64>() < spec.noise_rate {
                    let j = rng.gen_range(0..spec.vocab_size);
                    *t = language.tgt_token(j);
                }
            }
        }
        tgt
    };

    let bitext: ParallelCorpus = train_src
        .into_iter()
        .map(|s| {
            let t = noisy_translate(&s, &mut rng);
            (s, t)
        })
        .collect();
    let mono_tgt: Vec<Sentence> = mono_tgt_src.iter().map(|s| language.translate(s)).collect();
    let pair_clean = |srcs: Vec<Sentence>| -> ParallelCorpus {
        srcs.into_iter()
            .map(|s| {
                let t = language.translate(&s);
                (s, t)
            })
            .collect()
    };
    let dev = pair_clean(dev_src);
    let test = pair_clean(test_src);

    Ok(ToyData {
        bitext,
        mono_src,
        mono_tgt,
        dev,
        test,
        language,
    })
}

fn write_lines_raw<'a, I: Iterator<Item = &'a str>>(path: &Path, lines: I) -> Result<(), CorpusError> {
    let mut f = fs::File::create(path)?;
    for line in lines {
        writeln!(f, "{line}")?;
    }
    Ok(())
}

pub fn write_sentences(path: &Path, sentences: &[Sentence]) -> Result<(), CorpusError> {
    let joined: Vec<String> = sentences.iter().map(|s| s.join(" ")).collect();
    write_lines_raw(path, joined.iter().map(|s| s.as_str()))
}

pub fn read_sentences(path: &Path) -> Result<Vec<Sentence>, CorpusError> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(tokenize).collect())
}

pub fn write_parallel(
    src_path: &Path,
    tgt_path: &Path,
    pairs: &[(Sentence, Sentence)],
) -> Result<(), CorpusError> {
    let src: Vec<Sentence> = pairs.iter().map(|(s, _)| s.clone()).collect();
    let tgt: Vec<Sentence> = pairs.iter().map(|(_, t)| t.clone()).collect();
    write_sentences(src_path, &src)?;
    write_sentences(tgt_path, &tgt)
}

pub fn read_parallel(src_path: &Path, tgt_path: &Path) -> Result<ParallelCorpus, CorpusError> {
    let src = read_sentences(src_path)?;
    let tgt = read_sentences(tgt_path)?;
    if src.len() != tgt.len() {
        return Err(CorpusError::UnalignedFiles {
            src: src.len(),
            tgt: tgt.len(),
        });
    }
    Ok(src.into_iter().zip(tgt).collect())
}

/// Weighted triples, tab-separated, weight to 6 decimals.
pub fn write_weighted(
    path: &Path,
    triples: &[(f64, Sentence, Sentence)],
) -> Result<(), CorpusError> {
    let mut f = fs::File::create(path)?;
    for (w, s, t) in triples {
        writeln!(f, "{:.6}\t{}\t{}", w, s.join(" "), t.join(" "))?;
    }
    Ok(())
}

pub fn read_weighted(path: &Path) -> Result<Vec<(f64, Sentence, Sentence)>, CorpusError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let mut fields = line.split('\t');
        let (w, s, t) = match (fields.next(), fields.next(), fields.next()) {
            (Some(w), Some(s), Some(t)) => (w, s, t),
            _ => {
                return Err(CorpusError::BadWeightedLine {
                    line: i + 1,
                    reason: "expected 3 tab-separated fields".into(),
                })
            }
        };
        let w: f64 = w.parse().map_err(|e| CorpusError::BadWeightedLine {
            line: i + 1,
            reason: format!("bad weight: {e}"),
        })?;
        out.push((w, tokenize(s), tokenize(t)));
    }
    Ok(out)
}
