//! Experiment core for emotion recognition in conversation: causal context
//! windows over dialogue corpora, pooled token embeddings, a small
//! MLP/LSTM training stack, multi-seed sweeps with significance tests, and
//! discourse-marker position analysis.

pub mod corpus;
pub mod discourse;
pub mod embedding;
pub mod error;
pub mod lexicon;
pub mod nn;
pub mod rng;
pub mod stats;
pub mod sweep;
pub mod synth;
pub mod text;
pub mod trainer;

pub use error::{Error, Result};
