//! TOML experiment configuration and the three named presets.
//!
//! `baseline` trains on bitext only; `backtrans` adds one round of 1-best
//! back-translation with unit weights; `joint-em` alternates weighted
//! synthesis and retraining for several iterations.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::ToySpec;
use crate::em::EmConfig;
use crate::model::ModelConfig;
use crate::trainer::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("config serialize error: {0}")]
    Serialize(#[from] toml::ser::Error),
}

/// Split sizes for generated toy data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataSizes {
    pub n_parallel: usize,
    pub n_mono_src: usize,
    pub n_mono_tgt: usize,
    pub n_dev: usize,
    pub n_test: usize,
}

impl Default for DataSizes {
    fn default() -> Self {
        DataSizes {
            n_parallel: 150,
            n_mono_src: 300,
            n_mono_tgt: 300,
            n_dev: 40,
            n_test: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub toy: ToySpec,
    pub sizes: DataSizes,
    pub em: EmConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            toy: ToySpec::default(),
            sizes: DataSizes::default(),
            em: EmConfig {
                model: ModelConfig {
                    d_emb: 16,
                    d_hidden: 32,
                    src_vocab: 0, // bound to the task vocabularies at run time
                    tgt_vocab: 0,
                    max_len: 30,
                },
                pretrain: TrainConfig {
                    max_epochs: 8,
                    patience: 8,
                    ..TrainConfig::default()
                },
                m_step: TrainConfig {
                    max_epochs: 1,
                    patience: 1,
                    ..TrainConfig::default()
                },
                ..EmConfig::default()
            },
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
        Ok(toml::from_str(&std::fs::read_to_string(path)?)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        std::fs::write(path, toml::to_string_pretty(self)?)?;
        Ok(())
    }

    /// Named presets: `baseline`, `backtrans`, `joint-em`.
    pub fn preset(name: &str) -> Option<ExperimentConfig> {
        let mut cfg = ExperimentConfig::default();
        match name {
            "baseline" => {
                cfg.em.iterations = 0;
            }
            "backtrans" => {
                cfg.em.iterations = 1;
                cfg.em.e_step.n_best = 1;
                cfg.em.e_step.weights_all_one = true;
            }
            "joint-em" => {
                cfg.em.iterations = 4;
                cfg.em.e_step.n_best = 4;
                cfg.em.e_step.weights_all_one = false;
            }
            _ => return None,
        }
        Some(cfg)
    }
}
