//! Fake-fact pointing game.
//!
//! A query's real facts are mixed with facts borrowed from another query
//! (subjects rewritten to the target's). An explainer earns a hit when its
//! top-scored fact is real.

mod stats;

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::IndexedRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{explain, ExplainConfig, Method, RelevanceVector};
use crate::knowledge::{retrieve_facts, substitute_subjects, FactDatabase, FactSet, Query};
use crate::model::MemoryNetwork;
use crate::seed;

pub use stats::{binomial_significance, random_baseline_bounds, RandomBaseline, SignTest, DEFAULT_ALPHA};

pub const DEFAULT_MAX_RETRIES: usize = 25;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FakeFacts {
    pub facts: FactSet,
    pub donor_query_id: String,
    /// Donor draws used, including the accepted one.
    pub attempts: usize,
}

/// Draw donor queries with the same number of distinct entities until the
/// substituted donor facts alone do not let the model produce the ground
/// truth. One initial draw plus up to `max_retries` redraws.
pub fn make_fake_facts(
    query: &Query,
    db: &FactDatabase,
    network: &MemoryNetwork,
    rng: &mut impl Rng,
    max_retries: usize,
) -> Result<FakeFacts> {
    let arity = query.entities(db).len();
    let donors: Vec<&Query> = db
        .queries()
        .iter()
        .filter(|d| d.id != query.id && d.entities(db).len() == arity)
        .collect();
    if donors.is_empty() {
        return Err(Error::EntityCountMismatch {
            donor: 0,
            target: arity,
        });
    }
    let cap = network.config.text_cap;
    for attempt in 1..=max_retries + 1 {
        let donor = donors.choose(rng).expect("non-empty donors");
        let borrowed = retrieve_facts(donor, db, cap);
        if borrowed.is_empty() {
            continue;
        }
        let fake = substitute_subjects(&borrowed, donor, query, db)?;
        let alone = network.answer(query, &fake)?;
        if alone.entity != query.answer {
            return Ok(FakeFacts {
                facts: fake,
                donor_query_id: donor.id.clone(),
                attempts: attempt,
            });
        }
    }
    Err(Error::ExhaustedRetries {
        query_id: query.id.clone(),
        attempts: max_retries + 1,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridInstance {
    pub query_id: String,
    pub real: Vec<String>,
    pub fake: Vec<String>,
    pub donor_query_id: String,
    /// Model prediction on the union; equals the ground truth for kept instances.
    pub answer: String,
    /// The union, ascending by fact id.
    pub facts: FactSet,
}

impl HybridInstance {
    pub fn real_fraction(&self) -> f64 {
        self.real.len() as f64 / self.facts.len() as f64
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "kebab-case")]
pub enum SkipReason {
    NoFacts,
    NoDonor,
    ExhaustedRetries { attempts: usize },
    WrongAnswer { predicted: String },
}

impl SkipReason {
    pub fn tag(&self) -> &'static str {
        match self {
            SkipReason::NoFacts => "no-facts",
            SkipReason::NoDonor => "no-donor",
            SkipReason::ExhaustedRetries { .. } => "exhausted-retries",
            SkipReason::WrongAnswer { .. } => "wrong-answer",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Built {
    Kept(HybridInstance),
    Skipped { query_id: String, reason: SkipReason },
}

/// Build `ℱ ∪ ℱ′` and keep it only if the model answers it correctly.
pub fn build_hybrid(
    query: &Query,
    db: &FactDatabase,
    network: &MemoryNetwork,
    rng: &mut impl Rng,
    max_retries: usize,
) -> Result<Built> {
    let skip = |reason| {
        Ok(Built::Skipped {
            query_id: query.id.clone(),
            reason,
        })
    };
    let real = retrieve_facts(query, db, network.config.text_cap);
    if real.is_empty() {
        return skip(SkipReason::NoFacts);
    }
    let fake = match make_fake_facts(query, db, network, rng, max_retries) {
        Ok(fake) => fake,
        Err(Error::ExhaustedRetries { attempts, query_id }) => {
            log::debug!("{query_id}: no valid fake facts after {attempts} draws");
            return skip(SkipReason::ExhaustedRetries { attempts });
        }
        Err(Error::EntityCountMismatch { .. }) => return skip(SkipReason::NoDonor),
        Err(e) => return Err(e),
    };
    let facts = real.disjoint_union(&fake.facts)?;
    let predicted = network.answer(query, &facts)?.entity;
    if predicted != query.answer {
        return skip(SkipReason::WrongAnswer { predicted });
    }
    Ok(Built::Kept(HybridInstance {
        query_id: query.id.clone(),
        real: real.ids().into_iter().map(String::from).collect(),
        fake: fake.facts.ids().into_iter().map(String::from).collect(),
        donor_query_id: fake.donor_query_id,
        answer: predicted,
        facts,
    }))
}

/// Build one hybrid per query, in parallel; each query draws from its own
/// sub-seed, so the result does not depend on scheduling.
pub fn build_hybrids(queries: &[&Query], db: &FactDatabase, network: &MemoryNetwork, seed: u64, max_retries: usize) -> Result<Vec<Built>> {
    queries
        .par_iter()
        .map(|q| build_hybrid(q, db, network, &mut seed::rng(seed, &["fakefacts", &q.id]), max_retries))
        .collect()
}

/// 1 when the top-scored fact (ties to the smallest id) is real.
pub fn hit(rv: &RelevanceVector, instance: &HybridInstance) -> Result<bool> {
    let covered: BTreeSet<&str> = rv.fact_ids.iter().map(String::as_str).collect();
    let expected: BTreeSet<&str> = instance.facts.ids().into_iter().collect();
    if covered != expected || rv.fact_ids.len() != instance.facts.len() {
        return Err(Error::CoverageMismatch(format!(
            "{} scores {} facts, hybrid for {} has {}",
            rv.method,
            rv.fact_ids.len(),
            instance.query_id,
            instance.facts.len()
        )));
    }
    let top = rv.argmax().expect("non-empty relevance vector");
    Ok(instance.real.iter().any(|r| r == top))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HitRecord {
    pub query_id: String,
    pub method: Method,
    pub hit: bool,
    pub top_fact: String,
    pub real_facts: usize,
    pub fake_facts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointingGameResult {
    pub method: Method,
    pub hits: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PointingGame {
    pub results: Vec<PointingGameResult>,
    /// Instance-major, methods in the order requested.
    pub log: Vec<HitRecord>,
}

impl PointingGame {
    pub fn result(&self, method: Method) -> Option<&PointingGameResult> {
        self.results.iter().find(|r| r.method == method)
    }

    /// Per-instance hits of one method, in instance order.
    pub fn hits(&self, method: Method) -> Vec<bool> {
        self.log.iter().filter(|r| r.method == method).map(|r| r.hit).collect()
    }
}

pub fn pointing_game(
    instances: &[HybridInstance],
    db: &FactDatabase,
    network: &MemoryNetwork,
    methods: &[Method],
    cfg: &ExplainConfig,
) -> Result<PointingGame> {
    if instances.is_empty() {
        return Err(Error::Precondition("pointing game needs at least one hybrid instance".into()));
    }
    let per_instance: Vec<Vec<HitRecord>> = instances
        .par_iter()
        .map(|inst| {
            let query = db
                .query(&inst.query_id)
                .ok_or_else(|| Error::Invalid(format!("unknown query `{}`", inst.query_id)))?;
            let ex = explain(network, query, &inst.facts, methods, cfg)?;
            ex.relevance
                .iter()
                .map(|rv| {
                    Ok(HitRecord {
                        query_id: inst.query_id.clone(),
                        method: rv.method,
                        hit: hit(rv, inst)?,
                        top_fact: rv.argmax().expect("non-empty").to_string(),
                        real_facts: inst.real.len(),
                        fake_facts: inst.fake.len(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let log: Vec<HitRecord> = per_instance.into_iter().flatten().collect();
    let results = methods
        .iter()
        .map(|&method| {
            let hits = log.iter().filter(|r| r.method == method && r.hit).count();
            PointingGameResult {
                method,
                hits,
                total: instances.len(),
                accuracy: hits as f64 / instances.len() as f64,
            }
        })
        .collect();
    Ok(PointingGame { results, log })
}

/// Build hybrids for `queries`, play the game, and test every pair of methods.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Evaluation {
    pub queries: usize,
    pub kept: usize,
    pub skipped: BTreeMap<String, usize>,
    pub game: PointingGame,
    pub random_baseline: Option<RandomBaseline>,
    pub instances: Vec<HybridInstance>,
    pub skips: Vec<(String, SkipReason)>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalConfig {
    pub seed: u64,
    pub max_retries: usize,
    pub lime_samples: usize,
    pub alpha: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            seed: 0,
            max_retries: DEFAULT_MAX_RETRIES,
            lime_samples: crate::explain::DEFAULT_LIME_SAMPLES,
            alpha: DEFAULT_ALPHA,
        }
    }
}

pub fn evaluate(queries: &[&Query], db: &FactDatabase, network: &MemoryNetwork, methods: &[Method], cfg: &EvalConfig) -> Result<Evaluation> {
    let built = build_hybrids(queries, db, network, cfg.seed, cfg.max_retries)?;
    let mut instances = Vec::new();
    let mut skips = Vec::new();
    let mut skipped = BTreeMap::new();
    for b in built {
        match b {
            Built::Kept(inst) => instances.push(inst),
            Built::Skipped { query_id, reason } => {
                *skipped.entry(reason.tag().to_string()).or_insert(0) += 1;
                skips.push((query_id, reason));
            }
        }
    }
    log::info!("{} of {} queries kept as hybrids", instances.len(), queries.len());
    let explain_cfg = ExplainConfig {
        lime_samples: cfg.lime_samples,
        seed: seed::derive(cfg.seed, &["explain"]),
    };
    let game = pointing_game(&instances, db, network, methods, &explain_cfg)?;
    let random_baseline = game
        .result(Method::Random)
        .map(|r| random_baseline_bounds(&instances, r.hits));
    Ok(Evaluation {
        queries: queries.len(),
        kept: instances.len(),
        skipped,
        game,
        random_baseline,
        instances,
        skips,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub hits: usize,
    pub total: usize,
    pub accuracy: f64,
    pub skipped: usize,
    /// Sign-test p-value against each other method.
    pub p_values: BTreeMap<String, f64>,
    /// Whether each of those p-values clears the significance level.
    pub significant: BTreeMap<String, bool>,
}

/// The results file rows: accuracy per method plus pairwise p-values.
pub fn summarize(evaluation: &Evaluation, alpha: f64) -> Result<Vec<MethodSummary>> {
    let game = &evaluation.game;
    let skipped: usize = evaluation.skipped.values().sum();
    game.results
        .iter()
        .map(|r| {
            let mine = game.hits(r.method);
            let mut p_values = BTreeMap::new();
            let mut significant = BTreeMap::new();
            for o in game.results.iter().filter(|o| o.method != r.method) {
                let test = binomial_significance(&mine, &game.hits(o.method), alpha)?;
                p_values.insert(o.method.tag(), test.p_value);
                significant.insert(o.method.tag(), test.significant);
            }
            Ok(MethodSummary {
                method: r.method,
                hits: r.hits,
                total: r.total,
                accuracy: r.accuracy,
                skipped,
                p_values,
                significant,
            })
        })
        .collect()
}
