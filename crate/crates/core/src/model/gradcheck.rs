//! Central finite-difference check of the analytic loss gradient.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IteratorRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::backprop::Example;
use super::network::MemoryNetwork;
use super::train::initialize;
use super::vocab::Token;
use super::{HopSharing, ModelConfig};
use crate::error::{Error, Result};
use crate::knowledge::{generate_synthetic_corpus, retrieve_facts, FactBody, Query, SynthConfig, DEFAULT_TEXT_CAP};
use crate::seed;

/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero are judged by absolute error.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GroupCheck {
    pub coordinates: usize,
    pub max_relative_error: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub coordinates: usize,
    pub groups: BTreeMap<String, GroupCheck>,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR)
}

/// Rows of the embedding tables this example can touch.
fn touched_rows(network: &MemoryNetwork, example: &Example) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let mut relations = BTreeSet::new();
    let mut words = BTreeSet::new();
    let mut note = |tokens: &[Token]| {
        for t in tokens {
            if let Token::Word(i) = t {
                words.insert(*i);
            }
        }
    };
    note(&network.query_tokens(&example.query));
    for fact in &example.facts {
        match &fact.body {
            FactBody::Kb { relation } => {
                if let Some(r) = network.vocab.relation(relation) {
                    relations.insert(r);
                }
            }
            FactBody::Text { .. } => {
                let s = network.vocab.entity(&fact.subject).unwrap_or(0);
                if let Some(tokens) = network.vocab.fact_tokens(fact, s) {
                    note(&tokens);
                }
            }
        }
    }
    (relations, words)
}

/// Compare the analytic gradient with `(L(θ+ε) − L(θ−ε)) / 2ε` on a seeded
/// sample of about `coordinates` parameters spread over every group.
pub fn gradient_check(
    network: &MemoryNetwork,
    example: &Example,
    epsilon: f64,
    coordinates: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(Error::Precondition(format!("epsilon {epsilon} outside [1e-7, 1e-3]")));
    }
    let mut grad = network.weights.clone();
    grad.fill_zero();
    network.loss_and_gradient(example, &mut grad)?;

    let d = network.dim();
    let (relations, words) = touched_rows(network, example);
    let analytic = grad.groups();
    let per_group = coordinates.div_ceil(analytic.len()).max(1);
    let mut rng = seed::rng(seed, &["gradcheck"]);

    let mut probe = network.clone();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        coordinates: 0,
        groups: BTreeMap::new(),
    };
    for (g, (name, values)) in analytic.iter().enumerate() {
        let candidates: Vec<usize> = match name.as_str() {
            "relation" => relations.iter().flat_map(|&r| r * d..(r + 1) * d).collect(),
            "word" => words.iter().flat_map(|&w| w * d..(w + 1) * d).collect(),
            _ => (0..values.len()).collect(),
        };
        let picked = candidates.into_iter().choose_multiple(&mut rng, per_group);
        let mut worst = 0.0f64;
        for &i in &picked {
            let original = network.weights.groups()[g].1[i];
            probe.weights.groups_mut()[g].1[i] = original + epsilon;
            let plus = probe.loss(example)?;
            probe.weights.groups_mut()[g].1[i] = original - epsilon;
            let minus = probe.loss(example)?;
            probe.weights.groups_mut()[g].1[i] = original;
            let numeric = (plus - minus) / (2.0 * epsilon);
            worst = worst.max(relative_error(values[i], numeric));
        }
        report.coordinates += picked.len();
        report.max_relative_error = report.max_relative_error.max(worst);
        report.groups.insert(
            name.clone(),
            GroupCheck {
                coordinates: picked.len(),
                max_relative_error: worst,
            },
        );
    }
    Ok(report)
}

/// A small network with every weight drawn from U[-0.5, 0.5], plus one
/// example whose memory mixes KB and text facts.
///
/// Trained-scale weights leave many true gradients near 1e-7, where central
/// differences are dominated by round-off; the wider draw keeps the check
/// about the analytic gradient.
pub fn toy_instance(dim: usize, hops: usize, hop_sharing: HopSharing, seed: u64) -> Result<(MemoryNetwork, Example)> {
    let synth = SynthConfig {
        entities: 8,
        relations: 3,
        facts_per_entity: 3,
        queries_per_entity: 2,
        vocab_size: 12,
        ..SynthConfig::default()
    };
    let corpus = generate_synthetic_corpus(&synth, seed::derive(seed, &["toy-corpus"]))?;
    let cfg = ModelConfig {
        embed_dim: dim,
        hops,
        hop_sharing,
        seed,
        ..ModelConfig::default()
    };
    let mut network = initialize(&corpus.db, &cfg)?;
    let mut rng = seed::rng(seed, &["toy-weights"]);
    for (_, values) in network.weights.groups_mut() {
        for v in values.iter_mut() {
            *v = rng.random_range(-0.5..=0.5);
        }
    }
    let db = &corpus.db;
    let mixed = |q: &&Query| {
        retrieve_facts(q, db, DEFAULT_TEXT_CAP).kind_counts().len() == 2
    };
    let query = db
        .queries()
        .iter()
        .find(mixed)
        .or_else(|| db.queries().first())
        .ok_or_else(|| Error::Invalid("toy corpus has no queries".into()))?;
    let facts = retrieve_facts(query, db, DEFAULT_TEXT_CAP);
    Ok((
        network,
        Example {
            query: query.clone(),
            facts,
            target: query.answer.clone(),
        },
    ))
}
