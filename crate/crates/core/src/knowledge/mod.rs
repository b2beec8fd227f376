//! Fact database: entities, relations, KB triples, entity-tagged sentences and
//! cloze queries, plus per-query retrieval and fake-fact subject substitution.

mod io;
mod retrieve;
mod substitute;
mod synth;

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_database, load_provenance, parse_database, save_database, save_provenance};
pub use retrieve::{retrieve_facts, DEFAULT_TEXT_CAP};
pub use substitute::{substitute_subjects, FAKE_PREFIX};
pub use synth::{generate_synthetic_corpus, Provenance, SynthConfig, SyntheticCorpus};

/// Subject slot marker inside textual fact tokens.
pub const SUBJECT_SLOT: &str = "⟨SUBJ⟩";
/// Object slot marker inside textual fact tokens.
pub const OBJECT_SLOT: &str = "⟨OBJ⟩";
/// Blank marker of cloze queries; also stands in for the object slot when a
/// textual fact is encoded.
pub const BLANK: &str = "_blank_";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Entity {
    pub id: String,
    pub surface: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub id: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactKind {
    Kb,
    Text,
}

/// What distinguishes a KB triple from a textual fact.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FactBody {
    Kb { relation: String },
    /// Token sequence with exactly one [`SUBJECT_SLOT`] and one [`OBJECT_SLOT`].
    Text { tokens: Vec<String> },
}

/// Serializes as the `kb` / `text` line of the corpus format.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "FactRepr", into = "FactRepr")]
pub struct Fact {
    pub id: String,
    pub subject: String,
    pub object: String,
    pub body: FactBody,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum FactRepr {
    Kb {
        id: String,
        subject: String,
        relation: String,
        object: String,
    },
    Text {
        id: String,
        subject: String,
        object: String,
        tokens: Vec<String>,
    },
}

impl From<FactRepr> for Fact {
    fn from(r: FactRepr) -> Self {
        match r {
            FactRepr::Kb { id, subject, relation, object } => Fact::kb(id, subject, relation, object),
            FactRepr::Text { id, subject, object, tokens } => Fact {
                id,
                subject,
                object,
                body: FactBody::Text { tokens },
            },
        }
    }
}

impl From<Fact> for FactRepr {
    fn from(f: Fact) -> Self {
        match f.body {
            FactBody::Kb { relation } => FactRepr::Kb {
                id: f.id,
                subject: f.subject,
                relation,
                object: f.object,
            },
            FactBody::Text { tokens } => FactRepr::Text {
                id: f.id,
                subject: f.subject,
                object: f.object,
                tokens,
            },
        }
    }
}

impl Fact {
    pub fn kb(
        id: impl Into<String>,
        subject: impl Into<String>,
        relation: impl Into<String>,
        object: impl Into<String>,
    ) -> Self {
        Fact {
            id: id.into(),
            subject: subject.into(),
            object: object.into(),
            body: FactBody::Kb {
                relation: relation.into(),
            },
        }
    }

    pub fn text<S: Into<String>>(
        id: impl Into<String>,
        subject: impl Into<String>,
        object: impl Into<String>,
        tokens: impl IntoIterator<Item = S>,
    ) -> Self {
        Fact {
            id: id.into(),
            subject: subject.into(),
            object: object.into(),
            body: FactBody::Text {
                tokens: tokens.into_iter().map(Into::into).collect(),
            },
        }
    }

    pub fn kind(&self) -> FactKind {
        match self.body {
            FactBody::Kb { .. } => FactKind::Kb,
            FactBody::Text { .. } => FactKind::Text,
        }
    }

    pub fn relation(&self) -> Option<&str> {
        match &self.body {
            FactBody::Kb { relation } => Some(relation),
            FactBody::Text { .. } => None,
        }
    }

    pub fn tokens(&self) -> Option<&[String]> {
        match &self.body {
            FactBody::Kb { .. } => None,
            FactBody::Text { tokens } => Some(tokens),
        }
    }

    /// Checks the slot-marker invariants of textual facts.
    pub fn validate_shape(&self) -> Result<()> {
        if self.subject == SUBJECT_SLOT || self.subject == OBJECT_SLOT {
            return Err(Error::Invalid(format!(
                "fact `{}` uses a slot marker as subject",
                self.id
            )));
        }
        if let FactBody::Text { tokens } = &self.body {
            let subj = tokens.iter().filter(|t| *t == SUBJECT_SLOT).count();
            let obj = tokens.iter().filter(|t| *t == OBJECT_SLOT).count();
            if subj != 1 || obj != 1 {
                return Err(Error::Invalid(format!(
                    "text fact `{}` needs exactly one {SUBJECT_SLOT} and one {OBJECT_SLOT} \
                     (found {subj} and {obj})",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub id: String,
    pub tokens: Vec<String>,
    pub answer: String,
}

impl Query {
    /// Distinct entities mentioned by the query, in order of first occurrence.
    pub fn entities<'a>(&'a self, db: &FactDatabase) -> Vec<&'a str> {
        let mut seen = HashSet::new();
        self.tokens
            .iter()
            .map(String::as_str)
            .filter(|t| db.entity(t).is_some() && seen.insert(*t))
            .collect()
    }
}

/// Immutable, fully resolved store of facts and queries.
#[derive(Clone, Debug)]
pub struct FactDatabase {
    entities: Vec<Entity>,
    relations: Vec<Relation>,
    /// All facts, sorted by id.
    facts: Vec<Fact>,
    queries: Vec<Query>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    fact_index: HashMap<String, usize>,
    query_index: HashMap<String, usize>,
    /// subject id -> (kb fact positions, text fact positions), each ascending by id.
    by_subject: HashMap<String, (Vec<usize>, Vec<usize>)>,
}

impl FactDatabase {
    pub fn new(
        entities: Vec<Entity>,
        relations: Vec<Relation>,
        mut facts: Vec<Fact>,
        queries: Vec<Query>,
    ) -> Result<Self> {
        let mut entity_index = HashMap::with_capacity(entities.len());
        for (i, e) in entities.iter().enumerate() {
            if e.surface.is_empty() {
                return Err(Error::Invalid(format!("entity `{}` has an empty surface", e.id)));
            }
            if entity_index.insert(e.id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate entity id `{}`", e.id)));
            }
        }
        let mut relation_index = HashMap::with_capacity(relations.len());
        for (i, r) in relations.iter().enumerate() {
            if relation_index.insert(r.id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate relation id `{}`", r.id)));
            }
        }

        facts.sort_by(|a, b| a.id.cmp(&b.id));
        let mut fact_index = HashMap::with_capacity(facts.len());
        let mut by_subject: HashMap<String, (Vec<usize>, Vec<usize>)> = HashMap::new();
        for (i, f) in facts.iter().enumerate() {
            f.validate_shape()?;
            if fact_index.insert(f.id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate fact id `{}`", f.id)));
            }
            for ent in [&f.subject, &f.object] {
                if !entity_index.contains_key(ent) {
                    return Err(Error::DanglingReference {
                        kind: "entity",
                        id: ent.clone(),
                        context: format!("fact `{}`", f.id),
                    });
                }
            }
            if let Some(rel) = f.relation() {
                if !relation_index.contains_key(rel) {
                    return Err(Error::DanglingReference {
                        kind: "relation",
                        id: rel.to_string(),
                        context: format!("fact `{}`", f.id),
                    });
                }
            }
            let slot = by_subject.entry(f.subject.clone()).or_default();
            match f.kind() {
                FactKind::Kb => slot.0.push(i),
                FactKind::Text => slot.1.push(i),
            }
        }

        let mut query_index = HashMap::with_capacity(queries.len());
        for (i, q) in queries.iter().enumerate() {
            if query_index.insert(q.id.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate query id `{}`", q.id)));
            }
            let blanks = q.tokens.iter().filter(|t| *t == BLANK).count();
            if blanks != 1 {
                return Err(Error::Invalid(format!(
                    "query `{}` must contain exactly one {BLANK} (found {blanks})",
                    q.id
                )));
            }
            if !entity_index.contains_key(&q.answer) {
                return Err(Error::DanglingReference {
                    kind: "entity",
                    id: q.answer.clone(),
                    context: format!("answer of query `{}`", q.id),
                });
            }
            if !q.tokens.iter().any(|t| entity_index.contains_key(t)) {
                return Err(Error::Invalid(format!(
                    "query `{}` mentions no known entity",
                    q.id
                )));
            }
        }

        Ok(FactDatabase {
            entities,
            relations,
            facts,
            queries,
            entity_index,
            relation_index,
            fact_index,
            query_index,
            by_subject,
        })
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    pub fn relations(&self) -> &[Relation] {
        &self.relations
    }

    /// Every fact (KB and text), ascending by id.
    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn kb_facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter().filter(|f| f.kind() == FactKind::Kb)
    }

    pub fn text_facts(&self) -> impl Iterator<Item = &Fact> {
        self.facts.iter().filter(|f| f.kind() == FactKind::Text)
    }

    pub fn queries(&self) -> &[Query] {
        &self.queries
    }

    pub fn entity(&self, id: &str) -> Option<&Entity> {
        self.entity_index.get(id).map(|&i| &self.entities[i])
    }

    pub fn relation(&self, id: &str) -> Option<&Relation> {
        self.relation_index.get(id).map(|&i| &self.relations[i])
    }

    pub fn fact(&self, id: &str) -> Option<&Fact> {
        self.fact_index.get(id).map(|&i| &self.facts[i])
    }

    pub fn query(&self, id: &str) -> Option<&Query> {
        self.query_index.get(id).map(|&i| &self.queries[i])
    }

    /// (entities, kb facts, text facts)
    pub fn sizes(&self) -> (usize, usize, usize) {
        let kb = self.kb_facts().count();
        (self.entities.len(), kb, self.facts.len() - kb)
    }

    pub(crate) fn facts_with_subject(&self, subject: &str) -> (&[usize], &[usize]) {
        match self.by_subject.get(subject) {
            Some((kb, text)) => (kb, text),
            None => (&[], &[]),
        }
    }

    pub(crate) fn fact_at(&self, pos: usize) -> &Fact {
        &self.facts[pos]
    }

    /// Display string for an entity id (falls back to the id itself).
    pub fn surface<'a>(&'a self, id: &'a str) -> &'a str {
        self.entity(id).map(|e| e.surface.as_str()).unwrap_or(id)
    }

    /// Canonical JSONL serialization; identical content gives identical bytes.
    pub fn to_canonical_jsonl(&self) -> String {
        io::to_jsonl(self)
    }

    pub fn content_hash(&self) -> String {
        crate::seed::sha256_hex(self.to_canonical_jsonl().as_bytes())
    }
}

/// A per-query collection of facts, unique by id and kept in ascending id order.
///
/// Facts are owned so that fake facts (which live outside the database) and
/// real facts can be mixed in one set.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Fact>", into = "Vec<Fact>")]
pub struct FactSet {
    facts: Vec<Fact>,
}

impl TryFrom<Vec<Fact>> for FactSet {
    type Error = Error;

    fn try_from(facts: Vec<Fact>) -> Result<Self> {
        FactSet::new(facts)
    }
}

impl From<FactSet> for Vec<Fact> {
    fn from(set: FactSet) -> Self {
        set.facts
    }
}

impl FactSet {
    pub fn new(mut facts: Vec<Fact>) -> Result<Self> {
        facts.sort_by(|a, b| a.id.cmp(&b.id));
        if let Some(w) = facts.windows(2).find(|w| w[0].id == w[1].id) {
            return Err(Error::Invalid(format!("duplicate fact id `{}` in fact set", w[0].id)));
        }
        Ok(FactSet { facts })
    }

    pub fn empty() -> Self {
        FactSet::default()
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn facts(&self) -> &[Fact] {
        &self.facts
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Fact> {
        self.facts.iter()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.facts.iter().map(|f| f.id.as_str()).collect()
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.facts.binary_search_by(|f| f.id.as_str().cmp(id)).ok()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.position(id).is_some()
    }

    /// Union of two disjoint sets; shared ids are an error.
    pub fn disjoint_union(&self, other: &FactSet) -> Result<FactSet> {
        let mut all = self.facts.clone();
        all.extend(other.facts.iter().cloned());
        FactSet::new(all)
    }

    pub fn without(&self, id: &str) -> FactSet {
        FactSet {
            facts: self.facts.iter().filter(|f| f.id != id).cloned().collect(),
        }
    }

    /// Subset selected by a membership mask over this set's ordering.
    pub fn masked(&self, mask: &[bool]) -> FactSet {
        FactSet {
            facts: self
                .facts
                .iter()
                .zip(mask)
                .filter(|(_, &keep)| keep)
                .map(|(f, _)| f.clone())
                .collect(),
        }
    }

    /// Facts grouped by kind, for diagnostics.
    pub fn kind_counts(&self) -> BTreeMap<FactKind, usize> {
        let mut counts = BTreeMap::new();
        for f in &self.facts {
            *counts.entry(f.kind()).or_insert(0) += 1;
        }
        counts
    }
}

impl<'a> IntoIterator for &'a FactSet {
    type Item = &'a Fact;
    type IntoIter = std::slice::Iter<'a, Fact>;

    fn into_iter(self) -> Self::IntoIter {
        self.facts.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ents(ids: &[&str]) -> Vec<Entity> {
        ids.iter()
            .map(|id| Entity {
                id: id.to_string(),
                surface: id.to_uppercase(),
            })
            .collect()
    }

    #[test]
    fn rejects_dangling_and_malformed() {
        let rels = vec![Relation { id: "r".into() }];
        let bad = FactDatabase::new(ents(&["e1"]), rels.clone(), vec![Fact::kb("f", "e1", "r", "e99")], vec![]);
        assert!(matches!(bad, Err(Error::DanglingReference { id, .. }) if id == "e99"));

        let two_subj = Fact::text("t", "e1", "e1", [SUBJECT_SLOT, SUBJECT_SLOT, OBJECT_SLOT]);
        assert!(FactDatabase::new(ents(&["e1"]), rels.clone(), vec![two_subj], vec![]).is_err());

        let q = Query {
            id: "q".into(),
            tokens: vec!["e1".into(), "x".into()],
            answer: "e1".into(),
        };
        assert!(FactDatabase::new(ents(&["e1"]), rels, vec![], vec![q]).is_err());
    }

    #[test]
    fn fact_set_is_sorted_and_unique() {
        let set = FactSet::new(vec![Fact::kb("b", "x", "r", "y"), Fact::kb("a", "x", "r", "y")]).unwrap();
        assert_eq!(set.ids(), vec!["a", "b"]);
        assert!(FactSet::new(vec![Fact::kb("a", "x", "r", "y"), Fact::kb("a", "x", "r", "z")]).is_err());
        assert_eq!(set.without("a").ids(), vec!["b"]);
        assert_eq!(set.masked(&[false, true]).ids(), vec!["b"]);
    }

    #[test]
    fn query_entities_in_first_occurrence_order() {
        let db = FactDatabase::new(ents(&["a", "b"]), vec![], vec![], vec![]).unwrap();
        let q = Query {
            id: "q".into(),
            tokens: ["b", "w", "a", "b", BLANK].map(String::from).to_vec(),
            answer: "a".into(),
        };
        assert_eq!(q.entities(&db), vec!["b", "a"]);
    }
}
