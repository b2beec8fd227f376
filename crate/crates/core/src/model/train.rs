use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::backprop::Example;
use super::network::MemoryNetwork;
use super::params::Weights;
use super::vocab::Vocab;
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::knowledge::{retrieve_facts, FactDatabase, Query};
use crate::seed;

/// Gradient norm ceiling applied once divergence has been detected.
pub const CLIP_NORM: f64 = 5.0;
/// A batch gradient this many times larger than the running average counts
/// as divergence.
pub const SPIKE_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub train_accuracy: f64,
    pub heldout_accuracy: Option<f64>,
    pub clipping: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
    pub train_queries: usize,
    pub heldout_queries: Vec<String>,
    pub heldout_accuracy: Option<f64>,
    /// Training queries dropped because nothing was retrieved for them.
    pub skipped_queries: usize,
}

impl TrainingReport {
    pub fn final_loss(&self) -> Option<f64> {
        self.epochs.last().map(|e| e.mean_loss)
    }
}

/// Fresh parameters for `db`'s vocabulary, seeded from `cfg.seed`.
pub fn initialize(db: &FactDatabase, cfg: &ModelConfig) -> Result<MemoryNetwork> {
    cfg.validate()?;
    let vocab = Vocab::from_database(db);
    let mut rng = seed::rng(cfg.seed, &["init"]);
    let weights = Weights::init(cfg, vocab.entities().len(), vocab.relations().len(), vocab.words().len(), &mut rng);
    Ok(MemoryNetwork::new(cfg.clone(), vocab, weights))
}

/// Seeded split of the query list into (train, held-out).
pub fn split_queries(queries: &[Query], holdout_fraction: f64, seed: u64) -> (Vec<&Query>, Vec<&Query>) {
    let mut order: Vec<usize> = (0..queries.len()).collect();
    order.shuffle(&mut seed::rng(seed, &["split"]));
    let cut = (queries.len() as f64 * holdout_fraction).round() as usize;
    let mut heldout: Vec<usize> = order[..cut].to_vec();
    let mut train: Vec<usize> = order[cut..].to_vec();
    heldout.sort_unstable();
    train.sort_unstable();
    (
        train.into_iter().map(|i| &queries[i]).collect(),
        heldout.into_iter().map(|i| &queries[i]).collect(),
    )
}

/// Fraction of queries answered with their ground truth. Queries with no
/// retrieved facts count as wrong.
pub fn accuracy(network: &MemoryNetwork, db: &FactDatabase, queries: &[&Query]) -> f64 {
    if queries.is_empty() {
        return 0.0;
    }
    let correct = queries
        .iter()
        .filter(|q| {
            let facts = retrieve_facts(q, db, network.config.text_cap);
            network.answer(q, &facts).map(|a| a.entity == q.answer).unwrap_or(false)
        })
        .count();
    correct as f64 / queries.len() as f64
}

/// Mini-batch SGD on softmax cross-entropy over all entities.
pub fn train(db: &FactDatabase, cfg: &ModelConfig) -> Result<(MemoryNetwork, TrainingReport)> {
    let mut network = initialize(db, cfg)?;
    let (train_qs, heldout_qs) = split_queries(db.queries(), cfg.holdout_fraction, cfg.seed);

    let mut examples = Vec::with_capacity(train_qs.len());
    let mut skipped = 0;
    for q in &train_qs {
        let facts = retrieve_facts(q, db, cfg.text_cap);
        if facts.is_empty() {
            skipped += 1;
            continue;
        }
        examples.push(Example {
            query: (*q).clone(),
            facts,
            target: q.answer.clone(),
        });
    }

    let mut report = TrainingReport {
        epochs: Vec::with_capacity(cfg.epochs),
        train_queries: examples.len(),
        heldout_queries: heldout_qs.iter().map(|q| q.id.clone()).collect(),
        heldout_accuracy: None,
        skipped_queries: skipped,
    };
    if cfg.epochs == 0 || examples.is_empty() {
        report.heldout_accuracy = (!heldout_qs.is_empty()).then(|| accuracy(&network, db, &heldout_qs));
        return Ok((network, report));
    }

    let mut rng = seed::rng(cfg.seed, &["shuffle"]);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grad = network.weights.clone();
    let mut clipping = false;
    let mut best_loss = f64::INFINITY;
    let mut avg_norm: Option<f64> = None;

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total_loss = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(cfg.batch_size) {
            grad.fill_zero();
            for &i in batch {
                let (loss, hit) = network.loss_and_gradient(&examples[i], &mut grad)?;
                if !loss.is_finite() {
                    return Err(Error::Divergence { epoch, loss });
                }
                total_loss += loss;
                correct += usize::from(hit);
            }
            grad.scale(1.0 / batch.len() as f64);
            let norm = grad.norm();
            if !norm.is_finite() {
                return Err(Error::Divergence { epoch, loss: norm });
            }
            if !clipping && norm > CLIP_NORM && avg_norm.is_some_and(|avg| norm > SPIKE_FACTOR * avg) {
                log::warn!(
                    "epoch {epoch}: gradient norm {norm:.3e} spiked over running average {:.3e}; clipping gradients at norm {CLIP_NORM}",
                    avg_norm.unwrap_or_default()
                );
                clipping = true;
            }
            if clipping && norm > CLIP_NORM {
                grad.scale(CLIP_NORM / norm);
            }
            let seen = norm.min(CLIP_NORM);
            avg_norm = Some(avg_norm.map_or(seen, |avg| 0.9 * avg + 0.1 * seen));
            network.weights.add_scaled(-cfg.learning_rate, &grad);
        }
        if !network.weights.is_finite() {
            return Err(Error::Divergence { epoch, loss: f64::NAN });
        }

        let mean_loss = total_loss / examples.len() as f64;
        if !clipping && mean_loss > 2.0 * best_loss {
            log::warn!("epoch {epoch}: loss {mean_loss:.4} more than doubled (best {best_loss:.4}); clipping gradients at norm {CLIP_NORM}");
            clipping = true;
        }
        best_loss = best_loss.min(mean_loss);

        let heldout_accuracy = (!heldout_qs.is_empty()).then(|| accuracy(&network, db, &heldout_qs));
        log::info!(
            "epoch {epoch}: loss {mean_loss:.4}, train acc {:.3}, held-out acc {}",
            correct as f64 / examples.len() as f64,
            heldout_accuracy.map_or("-".into(), |a| format!("{a:.3}"))
        );
        report.epochs.push(EpochStats {
            epoch,
            mean_loss,
            train_accuracy: correct as f64 / examples.len() as f64,
            heldout_accuracy,
            clipping,
        });
    }
    report.heldout_accuracy = report.epochs.last().and_then(|e| e.heldout_accuracy);
    Ok((network, report))
}
