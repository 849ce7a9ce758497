//! Self-describing JSON checkpoints: model configuration, every named
//! parameter tensor with its shape, both vocabularies and the seed lineage
//! that produced the run. Round-trips are bit-exact for `f64` values because
//! serde_json preserves them via the shortest round-trippable decimal form.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Vocabulary;
use crate::model::{init_params, Model, ModelConfig};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "pairmt-checkpoint-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unrecognized checkpoint format {0:?}")]
    BadFormat(String),
    #[error("checkpoint missing parameter {0:?}")]
    MissingParam(String),
    #[error("parameter {name:?} has shape {got_rows}x{got_cols}, expected {rows}x{cols}")]
    ShapeMismatch {
        name: String,
        got_rows: usize,
        got_cols: usize,
        rows: usize,
        cols: usize,
    },
}

/// Seeds that determine a run, recorded for reproducibility audits.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq, Eq)]
pub struct SeedLineage {
    /// Experiment master seed.
    pub master: u64,
    /// Seed used for parameter initialization.
    pub init: u64,
    /// Seed used for batch shuffling during the stage that produced this model.
    pub shuffle: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub config: ModelConfig,
    pub params: Vec<(String, Tensor)>,
    pub src_vocab: Vocabulary,
    pub tgt_vocab: Vocabulary,
    pub seeds: SeedLineage,
}

impl Checkpoint {
    pub fn new(model: &Model, src_vocab: &Vocabulary, tgt_vocab: &Vocabulary, seeds: SeedLineage) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            config: model.config,
            params: model
                .params
                .named()
                .into_iter()
                .map(|(n, t)| (n.to_string(), (*t).clone()))
                .collect(),
            src_vocab: src_vocab.clone(),
            tgt_vocab: tgt_vocab.clone(),
            seeds,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Checkpoint, CheckpointError> {
        let bytes = std::fs::read(path)?;
        let mut ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::BadFormat(ckpt.format));
        }
        ckpt.src_vocab.rebuild_index();
        ckpt.tgt_vocab.rebuild_index();
        Ok(ckpt)
    }

    /// Rebuilds the model; every expected parameter must be present with the
    /// right shape.
    pub fn to_model(&self) -> Result<Model, CheckpointError> {
        let mut params = init_params(&self.config, 0);
        for (name, slot) in params.named_mut() {
            let found = self
                .params
                .iter()
                .find(|(n, _)| n == name)
                .ok_or_else(|| CheckpointError::MissingParam(name.to_string()))?;
            let t = &found.1;
            if t.rows != slot.rows || t.cols != slot.cols {
                return Err(CheckpointError::ShapeMismatch {
                    name: name.to_string(),
                    got_rows: t.rows,
                    got_cols: t.cols,
                    rows: slot.rows,
                    cols: slot.cols,
                });
            }
            *slot = Arc::new(t.clone());
        }
        Ok(Model {
            config: self.config,
            params,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::build_vocab;

    fn vocabs() -> (Vocabulary, Vocabulary) {
        let src = build_vocab([vec!["s0".to_string(), "s1".to_string()]].iter(), 10).unwrap();
        let tgt = build_vocab([vec!["t0".to_string(), "t1".to_string()]].iter(), 10).unwrap();
        (src, tgt)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let cfg = ModelConfig {
            d_emb: 3,
            d_hidden: 4,
            src_vocab: 6,
            tgt_vocab: 6,
            max_len: 8,
        };
        let model = Model::init(cfg, 99);
        let (sv, tv) = vocabs();
        let seeds = SeedLineage {
            master: 1,
            init: 99,
            shuffle: 7,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::new(&model, &sv, &tv, seeds.clone()).save(&path).unwrap();

        let loaded = Checkpoint::load(&path).unwrap();
        assert_eq!(loaded.seeds, seeds);
        assert_eq!(loaded.config, cfg);
        let rebuilt = loaded.to_model().unwrap();
        for ((na, ta), (nb, tb)) in model.params.named().iter().zip(rebuilt.params.named()) {
            assert_eq!(*na, nb);
            assert_eq!(ta.data, tb.data, "tensor {na} differs after round trip");
        }
        assert_eq!(loaded.src_vocab.token(4), sv.token(4));
        assert_eq!(loaded.tgt_vocab.id("t1"), tv.id("t1"));
    }

    #[test]
    fn save_reload_save_is_byte_identical() {
        let model = Model::init(
            ModelConfig {
                d_emb: 2,
                d_hidden: 2,
                src_vocab: 5,
                tgt_vocab: 5,
                max_len: 6,
            },
            3,
        );
        let (sv, tv) = vocabs();
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.json");
        let b = dir.path().join("b.json");
        Checkpoint::new(&model, &sv, &tv, SeedLineage::default()).save(&a).unwrap();
        let loaded = Checkpoint::load(&a).unwrap();
        loaded.save(&b).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn wrong_format_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"{"format":"other","config":{"d_emb":1,"d_hidden":1,"src_vocab":4,"tgt_vocab":4,"max_len":4},"params":[],"src_vocab":{"id_to_token":[]},"tgt_vocab":{"id_to_token":[]},"seeds":{"master":0,"init":0,"shuffle":0}}"#,
        )
        .unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(CheckpointError::BadFormat(_))
        ));
    }

    #[test]
    fn missing_param_rejected() {
        let model = Model::init(
            ModelConfig {
                d_emb: 2,
                d_hidden: 2,
                src_vocab: 5,
                tgt_vocab: 5,
                max_len: 6,
            },
            3,
        );
        let (sv, tv) = vocabs();
        let mut ckpt = Checkpoint::new(&model, &sv, &tv, SeedLineage::default());
        ckpt.params.retain(|(n, _)| n != "att_v");
        assert!(matches!(
            ckpt.to_model(),
            Err(CheckpointError::MissingParam(_))
        ));
    }
}
