use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::synth::{PlantedFact, Provenance};
use super::{Entity, Fact, FactBody, FactDatabase, Query, Relation};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct EntityLine {
    kind: String,
    id: String,
    surface: String,
}

#[derive(Serialize, Deserialize)]
struct RelationLine {
    kind: String,
    id: String,
}

#[derive(Serialize, Deserialize)]
struct KbLine {
    kind: String,
    id: String,
    subject: String,
    relation: String,
    object: String,
}

#[derive(Serialize, Deserialize)]
struct TextLine {
    kind: String,
    id: String,
    subject: String,
    object: String,
    tokens: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct QueryLine {
    id: String,
    tokens: Vec<String>,
    answer: String,
}

pub(super) fn to_jsonl(db: &FactDatabase) -> String {
    let mut out = String::new();
    let mut push = |line: String| {
        out.push_str(&line);
        out.push('\n');
    };
    for e in db.entities() {
        push(to_line(&EntityLine {
            kind: "entity".into(),
            id: e.id.clone(),
            surface: e.surface.clone(),
        }));
    }
    for r in db.relations() {
        push(to_line(&RelationLine {
            kind: "relation".into(),
            id: r.id.clone(),
        }));
    }
    for f in db.facts() {
        push(fact_line(f));
    }
    for q in db.queries() {
        push(to_line(&QueryLine {
            id: q.id.clone(),
            tokens: q.tokens.clone(),
            answer: q.answer.clone(),
        }));
    }
    out
}

pub(crate) fn fact_line(f: &Fact) -> String {
    match &f.body {
        FactBody::Kb { relation } => to_line(&KbLine {
            kind: "kb".into(),
            id: f.id.clone(),
            subject: f.subject.clone(),
            relation: relation.clone(),
            object: f.object.clone(),
        }),
        FactBody::Text { tokens } => to_line(&TextLine {
            kind: "text".into(),
            id: f.id.clone(),
            subject: f.subject.clone(),
            object: f.object.clone(),
            tokens: tokens.clone(),
        }),
    }
}

fn to_line<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("plain records always serialize")
}

fn parse_error(line: usize, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        line,
        message: message.to_string(),
    }
}

fn from_value<T: for<'de> Deserialize<'de>>(line: usize, value: Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| parse_error(line, e))
}

/// Parse the JSONL fact format from a string.
pub fn parse_database(content: &str) -> Result<FactDatabase> {
    let mut entities = Vec::new();
    let mut relations = Vec::new();
    let mut facts = Vec::new();
    let mut queries = Vec::new();

    for (i, raw) in content.lines().enumerate() {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(raw).map_err(|e| parse_error(line, e))?;
        let kind = value.get("kind").and_then(Value::as_str).map(str::to_owned);
        match kind.as_deref() {
            Some("entity") => {
                let r: EntityLine = from_value(line, value)?;
                entities.push(Entity {
                    id: r.id,
                    surface: r.surface,
                });
            }
            Some("relation") => {
                let r: RelationLine = from_value(line, value)?;
                relations.push(Relation { id: r.id });
            }
            Some("kb") => {
                let r: KbLine = from_value(line, value)?;
                facts.push(Fact::kb(r.id, r.subject, r.relation, r.object));
            }
            Some("text") => {
                let r: TextLine = from_value(line, value)?;
                facts.push(Fact::text(r.id, r.subject, r.object, r.tokens));
            }
            None | Some("query") => {
                let r: QueryLine = from_value(line, value)?;
                queries.push(Query {
                    id: r.id,
                    tokens: r.tokens,
                    answer: r.answer,
                });
            }
            Some(other) => return Err(parse_error(line, format!("unknown record kind `{other}`"))),
        }
    }

    FactDatabase::new(entities, relations, facts, queries)
}

pub fn load_database(path: impl AsRef<Path>) -> Result<FactDatabase> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_database(&content)
}

pub fn save_database(db: &FactDatabase, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, db.to_canonical_jsonl()).map_err(|e| Error::io(path, e))
}

pub fn save_provenance(provenance: &Provenance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for entry in &provenance.entries {
        out.push_str(&to_line(entry));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_provenance(path: impl AsRef<Path>) -> Result<Provenance> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let entry: PlantedFact = serde_json::from_str(raw).map_err(|e| parse_error(i + 1, e))?;
        entries.push(entry);
    }
    Ok(Provenance { entries })
}
