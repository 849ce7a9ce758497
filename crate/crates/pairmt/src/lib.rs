//! Paired neural machine translation models trained jointly on bitext and
//! monolingual data. A source-to-target and a target-to-source RNN model
//! bootstrap each other: each one back-translates the other side's
//! monolingual text into weighted pseudo-parallel data, and both retrain on
//! the union, alternating in an EM-style loop.
//!
//! Everything is desk scale and deterministic: f64 tensors, a tape-based
//! autodiff, seeded RNGs throughout, and a synthetic cipher language pair
//! with an oracle translator for end-to-end evaluation.

pub mod beam;
pub mod bleu;
pub mod checkpoint;
pub mod config;
pub mod corpus;
pub mod em;
pub mod model;
pub mod tensor;
pub mod trainer;
