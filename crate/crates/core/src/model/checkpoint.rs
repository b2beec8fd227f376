//! JSON checkpoints: a versioned header, the configuration, the vocabulary,
//! every named weight tensor, and optionally the training report.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::network::MemoryNetwork;
use super::params::Weights;
use super::train::TrainingReport;
use super::vocab::Vocab;
use super::ModelConfig;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "factlens-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    config: ModelConfig,
    vocab: Vocab,
    weights: Weights,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    training: Option<TrainingReport>,
}

pub fn save_checkpoint(network: &MemoryNetwork, training: Option<&TrainingReport>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ckpt = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        config: network.config.clone(),
        vocab: network.vocab.clone(),
        weights: network.weights.clone(),
        training: training.cloned(),
    };
    let json = serde_json::to_string(&ckpt)?;
    fs::write(path, json).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(MemoryNetwork, Option<TrainingReport>)> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&content)
}

pub fn parse_checkpoint(content: &str) -> Result<(MemoryNetwork, Option<TrainingReport>)> {
    let ckpt: Checkpoint = serde_json::from_str(content)?;
    if ckpt.format != CHECKPOINT_FORMAT {
        return Err(Error::Checkpoint(format!("unexpected format `{}`", ckpt.format)));
    }
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported version {} (expected {CHECKPOINT_VERSION})",
            ckpt.version
        )));
    }
    ckpt.config.validate()?;
    let expected = Weights::zeros(
        &ckpt.config,
        ckpt.vocab.entities().len(),
        ckpt.vocab.relations().len(),
        ckpt.vocab.words().len(),
    );
    check_shapes(&expected, &ckpt.weights)?;
    if !ckpt.weights.is_finite() {
        return Err(Error::Checkpoint("non-finite weights".into()));
    }
    Ok((MemoryNetwork::new(ckpt.config, ckpt.vocab, ckpt.weights), ckpt.training))
}

fn check_shapes(expected: &Weights, got: &Weights) -> Result<()> {
    let mismatch = |name: &str, want: &[usize], have: &[usize]| {
        Error::Checkpoint(format!("tensor `{name}` has shape {have:?}, expected {want:?}"))
    };
    let pairs2 = [
        ("entity", &expected.entity, &got.entity),
        ("relation", &expected.relation, &got.relation),
        ("word", &expected.word, &got.word),
        ("encoder.fwd.input", &expected.encoder_fwd.input, &got.encoder_fwd.input),
        ("encoder.fwd.recurrent", &expected.encoder_fwd.recurrent, &got.encoder_fwd.recurrent),
        ("encoder.bwd.input", &expected.encoder_bwd.input, &got.encoder_bwd.input),
        ("encoder.bwd.recurrent", &expected.encoder_bwd.recurrent, &got.encoder_bwd.recurrent),
        ("projection", &expected.projection, &got.projection),
        ("output.weight", &expected.output, &got.output),
    ];
    for (name, want, have) in pairs2 {
        if want.shape() != have.shape() || !have.is_standard_layout() {
            return Err(mismatch(name, want.shape(), have.shape()));
        }
    }
    let pairs1 = [
        ("encoder.fwd.bias", &expected.encoder_fwd.bias, &got.encoder_fwd.bias),
        ("encoder.bwd.bias", &expected.encoder_bwd.bias, &got.encoder_bwd.bias),
        ("output.bias", &expected.output_bias, &got.output_bias),
    ];
    for (name, want, have) in pairs1 {
        if want.shape() != have.shape() {
            return Err(mismatch(name, want.shape(), have.shape()));
        }
    }
    if expected.hops.len() != got.hops.len() {
        return Err(Error::Checkpoint(format!(
            "{} hop matrices, expected {}",
            got.hops.len(),
            expected.hops.len()
        )));
    }
    for (t, (want, have)) in expected.hops.iter().zip(&got.hops).enumerate() {
        if want.shape() != have.shape() || !have.is_standard_layout() {
            return Err(mismatch(&format!("hop.{}", t + 1), want.shape(), have.shape()));
        }
    }
    Ok(())
}
