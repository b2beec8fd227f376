use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::knowledge::{Fact, FactBody, FactDatabase, BLANK, OBJECT_SLOT, SUBJECT_SLOT};

/// Stand-in for tokens never seen when the vocabulary was built.
pub const OOV: &str = "<unk>";

pub(crate) const BLANK_INDEX: usize = 0;
pub(crate) const OOV_INDEX: usize = 1;

/// An index into one of the two input embedding tables.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Token {
    Entity(usize),
    Word(usize),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct VocabLists {
    entities: Vec<String>,
    relations: Vec<String>,
    words: Vec<String>,
}

/// Id-to-row mapping for entities, relations and words.
///
/// Entities and relations are sorted by id, so the smallest row index is also
/// the smallest id. Words start with [`BLANK`] and [`OOV`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "VocabLists", into = "VocabLists")]
pub struct Vocab {
    entities: Vec<String>,
    relations: Vec<String>,
    words: Vec<String>,
    entity_index: HashMap<String, usize>,
    relation_index: HashMap<String, usize>,
    word_index: HashMap<String, usize>,
}

impl From<VocabLists> for Vocab {
    fn from(lists: VocabLists) -> Self {
        let index = |xs: &[String]| xs.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Vocab {
            entity_index: index(&lists.entities),
            relation_index: index(&lists.relations),
            word_index: index(&lists.words),
            entities: lists.entities,
            relations: lists.relations,
            words: lists.words,
        }
    }
}

impl From<Vocab> for VocabLists {
    fn from(v: Vocab) -> Self {
        VocabLists {
            entities: v.entities,
            relations: v.relations,
            words: v.words,
        }
    }
}

impl Vocab {
    pub fn new(entities: Vec<String>, relations: Vec<String>, words: Vec<String>) -> Self {
        let mut entities = entities;
        entities.sort();
        entities.dedup();
        let mut relations = relations;
        relations.sort();
        relations.dedup();
        let rest: BTreeSet<String> = words
            .into_iter()
            .filter(|w| w != BLANK && w != OOV && w != SUBJECT_SLOT && w != OBJECT_SLOT)
            .collect();
        let words = [BLANK.to_string(), OOV.to_string()].into_iter().chain(rest).collect();
        VocabLists {
            entities,
            relations,
            words,
        }
        .into()
    }

    pub fn from_database(db: &FactDatabase) -> Self {
        let entities = db.entities().iter().map(|e| e.id.clone()).collect();
        let relations = db.relations().iter().map(|r| r.id.clone()).collect();
        let is_word = |t: &&String| db.entity(t).is_none();
        let words = db
            .text_facts()
            .filter_map(Fact::tokens)
            .flatten()
            .chain(db.queries().iter().flat_map(|q| q.tokens.iter()))
            .filter(is_word)
            .cloned()
            .collect();
        Vocab::new(entities, relations, words)
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn relations(&self) -> &[String] {
        &self.relations
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn entity(&self, id: &str) -> Option<usize> {
        self.entity_index.get(id).copied()
    }

    pub fn relation(&self, id: &str) -> Option<usize> {
        self.relation_index.get(id).copied()
    }

    /// Entity ids become entity tokens; anything else is a word, falling back
    /// to [`OOV`].
    pub fn token(&self, text: &str) -> Token {
        if let Some(i) = self.entity(text) {
            Token::Entity(i)
        } else {
            Token::Word(self.word_index.get(text).copied().unwrap_or(OOV_INDEX))
        }
    }

    /// Encoder input for a textual fact: subject slot becomes the subject
    /// entity, object slot becomes the blank.
    pub(crate) fn fact_tokens(&self, fact: &Fact, subject: usize) -> Option<Vec<Token>> {
        match &fact.body {
            FactBody::Kb { .. } => None,
            FactBody::Text { tokens } => Some(
                tokens
                    .iter()
                    .map(|t| match t.as_str() {
                        SUBJECT_SLOT => Token::Entity(subject),
                        OBJECT_SLOT => Token::Word(BLANK_INDEX),
                        other => self.token(other),
                    })
                    .collect(),
            ),
        }
    }
}
