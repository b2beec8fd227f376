//! Desk-scale synthetic corpora with a planted supporting fact per query.
//!
//! Every entity gets `facts_per_entity` facts, each under a distinct relation
//! and pointing at a distinct object. A relation is signalled in text by a
//! small set of cue words; queries about `(entity, relation)` reuse those cue
//! words, so exactly one retrieved fact (the planted one) connects the query
//! to its answer and the rest are distractors with other objects.

use std::collections::HashSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Entity, Fact, FactDatabase, Query, Relation, BLANK, OBJECT_SLOT, SUBJECT_SLOT};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub entities: usize,
    pub relations: usize,
    pub facts_per_entity: usize,
    pub queries_per_entity: usize,
    pub vocab_size: usize,
    pub cue_words_per_relation: usize,
    /// Probability that a generated fact is textual rather than a KB triple.
    pub text_fraction: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            entities: 50,
            relations: 5,
            facts_per_entity: 5,
            queries_per_entity: 5,
            vocab_size: 40,
            cue_words_per_relation: 3,
            text_fraction: 0.5,
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InfeasibleConfig(msg));
        if self.entities < 2 {
            return fail(format!("need at least 2 entities, got {}", self.entities));
        }
        if self.relations == 0 || self.facts_per_entity == 0 {
            return fail("relations and facts_per_entity must be positive".into());
        }
        if self.facts_per_entity > self.relations {
            return fail(format!(
                "{} facts per entity need as many distinct relations, only {} available",
                self.facts_per_entity, self.relations
            ));
        }
        if self.facts_per_entity > self.entities - 1 {
            return fail(format!(
                "{} distinct objects per entity need at least {} entities",
                self.facts_per_entity,
                self.facts_per_entity + 1
            ));
        }
        if self.queries_per_entity > self.facts_per_entity {
            return fail(format!(
                "{} queries per entity exceed the {} facts that could support them",
                self.queries_per_entity, self.facts_per_entity
            ));
        }
        if self.cue_words_per_relation < 2 {
            return fail("each relation needs at least 2 cue words".into());
        }
        let cues = self.relations * self.cue_words_per_relation;
        if self.vocab_size <= cues {
            return fail(format!(
                "vocabulary of {} cannot hold {cues} cue words plus filler",
                self.vocab_size
            ));
        }
        if !(0.0..=1.0).contains(&self.text_fraction) {
            return fail(format!("text_fraction {} outside [0, 1]", self.text_fraction));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedFact {
    pub query_id: String,
    pub planted_fact_id: String,
}

/// Side table naming, for each query, the one fact that supports its answer.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Provenance {
    pub entries: Vec<PlantedFact>,
}

impl Provenance {
    pub fn planted_for(&self, query_id: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|p| p.query_id == query_id)
            .map(|p| p.planted_fact_id.as_str())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticCorpus {
    pub db: FactDatabase,
    pub provenance: Provenance,
}

const SYLLABLES: &[&str] = &[
    "ka", "lo", "mi", "ra", "ten", "vu", "sha", "dor", "el", "qui", "bar", "no", "zi", "pel", "tra",
    "gan", "ow", "ris", "ma", "fen",
];

fn surface_name(rng: &mut impl Rng, taken: &mut HashSet<String>, fallback: usize) -> String {
    for _ in 0..8 {
        let n = rng.random_range(2..=3);
        let mut name: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        if let Some(first) = name.get_mut(0..1) {
            first.make_ascii_uppercase();
        }
        if taken.insert(name.clone()) {
            return name;
        }
    }
    let name = format!("Entity {fallback}");
    taken.insert(name.clone());
    name
}

/// Insert one filler word at a random position with probability 1/2.
fn maybe_filler(rng: &mut impl Rng, tokens: &mut Vec<String>, fillers: &[String]) {
    if !fillers.is_empty() && rng.random_bool(0.5) {
        let at = rng.random_range(0..=tokens.len());
        tokens.insert(at, fillers.choose(rng).unwrap().clone());
    }
}

fn cue_pair(rng: &mut impl Rng, cues: &[String]) -> [String; 2] {
    let picked: Vec<&String> = cues.choose_multiple(rng, 2).collect();
    [picked[0].clone(), picked[1].clone()]
}

pub fn generate_synthetic_corpus(cfg: &SynthConfig, seed: u64) -> Result<SyntheticCorpus> {
    cfg.check()?;
    let mut rng = crate::seed::rng(seed, &["corpus"]);

    let mut taken = HashSet::new();
    let entities: Vec<Entity> = (0..cfg.entities)
        .map(|i| Entity {
            id: format!("e{i:04}"),
            surface: surface_name(&mut rng, &mut taken, i),
        })
        .collect();
    let relations: Vec<Relation> = (0..cfg.relations)
        .map(|i| Relation {
            id: format!("synth.rel_{i:02}"),
        })
        .collect();

    let mut words: Vec<String> = (0..cfg.vocab_size).map(|i| format!("w{i:03}")).collect();
    words.shuffle(&mut rng);
    let cue_total = cfg.relations * cfg.cue_words_per_relation;
    let cues: Vec<Vec<String>> = words[..cue_total]
        .chunks(cfg.cue_words_per_relation)
        .map(<[String]>::to_vec)
        .collect();
    let fillers = &words[cue_total..];

    let mut facts = Vec::new();
    let mut queries = Vec::new();
    let mut provenance = Provenance::default();
    let mut next_fact = 0usize;

    for (ei, entity) in entities.iter().enumerate() {
        let rels: Vec<usize> = rand::seq::index::sample(&mut rng, cfg.relations, cfg.facts_per_entity).into_vec();
        let others: Vec<usize> = (0..cfg.entities).filter(|&j| j != ei).collect();
        let objects: Vec<usize> = others.choose_multiple(&mut rng, cfg.facts_per_entity).copied().collect();

        let mut own = Vec::with_capacity(cfg.facts_per_entity);
        for (&rel, &obj) in rels.iter().zip(&objects) {
            let object = entities[obj].id.clone();
            let fact = if rng.random_bool(cfg.text_fraction) {
                let [a, b] = cue_pair(&mut rng, &cues[rel]);
                let mut tokens = vec![SUBJECT_SLOT.to_string(), a, b, OBJECT_SLOT.to_string()];
                maybe_filler(&mut rng, &mut tokens, fillers);
                Fact::text(format!("tx{next_fact:05}"), entity.id.clone(), object, tokens)
            } else {
                Fact::kb(
                    format!("kb{next_fact:05}"),
                    entity.id.clone(),
                    relations[rel].id.clone(),
                    object,
                )
            };
            next_fact += 1;
            own.push((rel, fact));
        }

        let asked = rand::seq::index::sample(&mut rng, own.len(), cfg.queries_per_entity).into_vec();
        for k in asked {
            let (rel, fact) = &own[k];
            let [a, b] = cue_pair(&mut rng, &cues[*rel]);
            let mut tokens = vec![entity.id.clone(), a, b, BLANK.to_string()];
            maybe_filler(&mut rng, &mut tokens, fillers);
            let id = format!("q{:05}", queries.len());
            provenance.entries.push(PlantedFact {
                query_id: id.clone(),
                planted_fact_id: fact.id.clone(),
            });
            queries.push(Query {
                id,
                tokens,
                answer: fact.object.clone(),
            });
        }
        facts.extend(own.into_iter().map(|(_, f)| f));
    }

    let db = FactDatabase::new(entities, relations, facts, queries)?;
    Ok(SyntheticCorpus { db, provenance })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{retrieve_facts, DEFAULT_TEXT_CAP};

    #[test]
    fn deterministic_for_seed() {
        let cfg = SynthConfig::default();
        let a = generate_synthetic_corpus(&cfg, 7).unwrap();
        let b = generate_synthetic_corpus(&cfg, 7).unwrap();
        assert_eq!(a.db.to_canonical_jsonl(), b.db.to_canonical_jsonl());
        assert_eq!(a.provenance, b.provenance);
        let c = generate_synthetic_corpus(&cfg, 8).unwrap();
        assert_ne!(a.db.content_hash(), c.db.content_hash());
    }

    #[test]
    fn planted_fact_supports_answer_and_distractors_do_not() {
        let corpus = generate_synthetic_corpus(&SynthConfig::default(), 3).unwrap();
        let db = &corpus.db;
        assert_eq!(corpus.provenance.entries.len(), db.queries().len());
        for q in db.queries() {
            let planted = db.fact(corpus.provenance.planted_for(&q.id).unwrap()).unwrap();
            assert_eq!(planted.object, q.answer);
            let retrieved = retrieve_facts(q, db, DEFAULT_TEXT_CAP);
            assert!(retrieved.contains(&planted.id));
            for f in retrieved.iter().filter(|f| f.id != planted.id) {
                assert_ne!(f.object, q.answer, "distractor {} points at the answer", f.id);
            }
        }
    }

    #[test]
    fn infeasible_configs() {
        let base = SynthConfig::default();
        for cfg in [
            SynthConfig { facts_per_entity: 6, ..base.clone() },
            SynthConfig { entities: 4, ..base.clone() },
            SynthConfig { queries_per_entity: 6, ..base.clone() },
            SynthConfig { vocab_size: 15, ..base.clone() },
            SynthConfig { text_fraction: 1.5, ..base.clone() },
        ] {
            assert!(matches!(generate_synthetic_corpus(&cfg, 1), Err(Error::InfeasibleConfig(_))));
        }
    }
}
