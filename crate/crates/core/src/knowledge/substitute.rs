use std::collections::HashMap;

use super::{Fact, FactDatabase, FactSet, Query};
use crate::error::{Error, Result};

/// Id prefix of every fact produced by subject substitution.
pub const FAKE_PREFIX: &str = "fake:";

/// Rebind the subjects of `donor` facts from the entities of `donor_query` to
/// those of `target_query`, pairing entities by position of first occurrence.
///
/// Objects, relations and token sequences are kept as they are; for textual
/// facts only the subject slot binding changes.
pub fn substitute_subjects(
    donor: &FactSet,
    donor_query: &Query,
    target_query: &Query,
    db: &FactDatabase,
) -> Result<FactSet> {
    let from = donor_query.entities(db);
    let to = target_query.entities(db);
    if from.len() != to.len() {
        return Err(Error::EntityCountMismatch {
            donor: from.len(),
            target: to.len(),
        });
    }
    let mapping: HashMap<&str, &str> = from.into_iter().zip(to).collect();

    let facts = donor
        .iter()
        .map(|f| {
            let subject = mapping.get(f.subject.as_str()).ok_or_else(|| Error::DanglingReference {
                kind: "entity",
                id: f.subject.clone(),
                context: format!(
                    "subject of donor fact `{}` is not mentioned by query `{}`",
                    f.id, donor_query.id
                ),
            })?;
            Ok(Fact {
                id: format!("{FAKE_PREFIX}{}", f.id),
                subject: subject.to_string(),
                object: f.object.clone(),
                body: f.body.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    FactSet::new(facts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{Entity, Relation, BLANK, OBJECT_SLOT, SUBJECT_SLOT};

    fn example_db() -> FactDatabase {
        let entities = [
            ("philip", "Philip"),
            ("judea", "Judea"),
            ("herod", "Herod"),
            ("males", "Males"),
            ("bateman", "Patrick Bateman"),
            ("wallst", "Wall Street"),
            ("bale", "Christian Bale"),
        ]
        .iter()
        .map(|(id, s)| Entity {
            id: id.to_string(),
            surface: s.to_string(),
        })
        .collect();
        let facts = vec![
            Fact::kb("kb1", "philip", "people.person.gender", "males"),
            Fact::text(
                "tx1",
                "judea",
                "herod",
                ["This", "year", OBJECT_SLOT, "divided", SUBJECT_SLOT, "into", "four", "kingdoms"],
            ),
        ];
        let queries = vec![donor_query(), target_query()];
        FactDatabase::new(
            entities,
            vec![Relation {
                id: "people.person.gender".into(),
            }],
            facts,
            queries,
        )
        .unwrap()
    }

    fn donor_query() -> Query {
        Query {
            id: "donor".into(),
            tokens: ["This", "year", "philip", "and", BLANK, "divided", "judea", "into", "four", "kingdoms"]
                .map(String::from)
                .to_vec(),
            answer: "herod".into(),
        }
    }

    fn target_query() -> Query {
        Query {
            id: "target".into(),
            tokens: [BLANK, "was", "chosen", "to", "portray", "bateman", "a", "wallst", "serial", "killer"]
                .map(String::from)
                .to_vec(),
            answer: "bale".into(),
        }
    }

    #[test]
    fn rebinds_subjects_positionally() {
        let db = example_db();
        let donor = FactSet::new(db.facts().to_vec()).unwrap();
        let fake = substitute_subjects(&donor, &donor_query(), &target_query(), &db).unwrap();
        assert_eq!(fake.ids(), vec!["fake:kb1", "fake:tx1"]);

        let kb = &fake.facts()[0];
        assert_eq!(kb.subject, "bateman");
        assert_eq!(kb.relation(), Some("people.person.gender"));
        assert_eq!(kb.object, "males");

        let text = &fake.facts()[1];
        assert_eq!(text.subject, "wallst");
        assert_eq!(text.object, "herod");
        assert_eq!(text.tokens(), donor.facts()[1].tokens());
    }

    #[test]
    fn entity_count_mismatch() {
        let db = example_db();
        let mut single = target_query();
        single.tokens.retain(|t| t != "wallst");
        let donor = FactSet::new(db.facts().to_vec()).unwrap();
        let err = substitute_subjects(&donor, &donor_query(), &single, &db).unwrap_err();
        assert!(matches!(err, Error::EntityCountMismatch { donor: 2, target: 1 }));
    }
}
