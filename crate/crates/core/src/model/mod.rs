//! Key-value memory network over KB and textual facts.
//!
//! KB facts are keyed by `[s; r]`, textual facts and queries by a
//! bidirectional gated recurrent encoder; values are object embeddings. The
//! query encoding seeds `h` attention hops
//! `c_t = W_t (c_{t-1} + W_p · pad(Σ softmax(c_{t-1}·k) v))`, after which an
//! output layer produces `b` and the answer is `argmax(E·b)`.

mod backprop;
mod checkpoint;
mod gradcheck;
mod lstm;
mod network;
mod params;
mod train;
mod vocab;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::DEFAULT_TEXT_CAP;

pub use backprop::Example;
pub use checkpoint::{load_checkpoint, parse_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use gradcheck::{gradient_check, relative_error, toy_instance, GradCheckReport, GroupCheck, RELATIVE_ERROR_FLOOR};
pub use network::{Answer, BoundQuery, HopTrace, MemoryCell, MemoryNetwork};
pub use params::{LstmWeights, Weights};
pub use train::{accuracy, initialize, split_queries, train, EpochStats, TrainingReport, CLIP_NORM, SPIKE_FACTOR};
pub use vocab::{Token, Vocab, OOV};

/// Whether each hop has its own `W_t` or all hops share one.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopSharing {
    #[default]
    PerHop,
    Shared,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hops: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Standard deviation of the normal the embedding tables start from.
    #[serde(default = "default_embedding_sigma")]
    pub embedding_sigma: f64,
    #[serde(default)]
    pub hop_sharing: HopSharing,
    pub text_cap: usize,
    pub holdout_fraction: f64,
}

/// At 0.1 the attention logits start so flat that plain SGD never leaves the
/// answer-prior plateau within a desk-scale schedule.
pub const DEFAULT_EMBEDDING_SIGMA: f64 = 0.4;

fn default_embedding_sigma() -> f64 {
    DEFAULT_EMBEDDING_SIGMA
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embed_dim: 16,
            hops: 3,
            learning_rate: 0.1,
            epochs: 30,
            seed: 0,
            batch_size: 4,
            embedding_sigma: DEFAULT_EMBEDDING_SIGMA,
            hop_sharing: HopSharing::PerHop,
            text_cap: DEFAULT_TEXT_CAP,
            holdout_fraction: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.embed_dim < 2 {
            return Err(Error::Precondition(format!("embed_dim must be >= 2, got {}", self.embed_dim)));
        }
        if self.hops < 1 {
            return Err(Error::Precondition("hops must be >= 1".into()));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::Precondition(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.embedding_sigma.is_finite() && self.embedding_sigma > 0.0) {
            return Err(Error::Precondition(format!("embedding_sigma {} must be positive", self.embedding_sigma)));
        }
        if self.batch_size == 0 {
            return Err(Error::Precondition("batch_size must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return Err(Error::Precondition(format!(
                "holdout_fraction {} outside [0, 1)",
                self.holdout_fraction
            )));
        }
        Ok(())
    }
}
