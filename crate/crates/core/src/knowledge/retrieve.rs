use super::{FactDatabase, FactSet, Query};

/// Default ceiling on textual facts retrieved per query.
pub const DEFAULT_TEXT_CAP: usize = 500;

/// All KB facts and at most `text_cap` textual facts whose subject is an
/// entity mentioned in the query. Textual facts over the cap are dropped from
/// the high end of the id order.
pub fn retrieve_facts(query: &Query, db: &FactDatabase, text_cap: usize) -> FactSet {
    let mut kb = Vec::new();
    let mut text = Vec::new();
    for entity in query.entities(db) {
        let (k, t) = db.facts_with_subject(entity);
        kb.extend_from_slice(k);
        text.extend_from_slice(t);
    }
    // positions index the id-sorted fact list, so sorting them sorts by id
    text.sort_unstable();
    text.truncate(text_cap);
    let facts = kb
        .into_iter()
        .chain(text)
        .map(|pos| db.fact_at(pos).clone())
        .collect();
    FactSet::new(facts).expect("each fact has a single subject, so no duplicates")
}
