use std::collections::HashSet;

use factlens_core::knowledge::{
    generate_synthetic_corpus, load_database, load_provenance, parse_database, retrieve_facts, save_database,
    save_provenance, substitute_subjects, FactBody, FactDatabase, FactKind, SynthConfig, DEFAULT_TEXT_CAP, FAKE_PREFIX,
    OBJECT_SLOT, SUBJECT_SLOT,
};
use factlens_core::Error;
use proptest::prelude::*;

const HEROD: &str = r#"{"kind":"entity","id":"judea","surface":"Judea"}
{"kind":"entity","id":"herod","surface":"Herod"}
{"kind":"entity","id":"wallst","surface":"Wall Street"}
{"kind":"entity","id":"philip","surface":"Philip"}
{"kind":"entity","id":"bateman","surface":"Patrick Bateman"}
{"kind":"entity","id":"males","surface":"Males"}
{"kind":"relation","id":"person.gender"}
{"kind":"kb","id":"kb1","subject":"philip","relation":"person.gender","object":"males"}
{"kind":"text","id":"tx1","subject":"judea","object":"herod","tokens":["This","year","⟨OBJ⟩","divided","⟨SUBJ⟩","into","four","kingdoms"]}
{"id":"q1","tokens":["philip","was","a","_blank_"],"answer":"males"}
{"id":"q2","tokens":["bateman","was","a","_blank_"],"answer":"males"}
{"id":"q3","tokens":["judea","was","ruled","by","_blank_"],"answer":"herod"}
{"id":"q4","tokens":["wallst","is","run","by","_blank_"],"answer":"herod"}
{"id":"q5","tokens":["philip","met","bateman","at","_blank_"],"answer":"wallst"}
"#;

#[test]
fn kb_and_text_substitution_examples() {
    let db = parse_database(HEROD).unwrap();
    let q = |id| db.query(id).unwrap();

    let kb = substitute_subjects(&retrieve_facts(q("q1"), &db, DEFAULT_TEXT_CAP), q("q1"), q("q2"), &db).unwrap();
    let fake = &kb.facts()[0];
    assert_eq!((fake.subject.as_str(), fake.relation(), fake.object.as_str()), ("bateman", Some("person.gender"), "males"));
    assert_eq!(fake.id, format!("{FAKE_PREFIX}kb1"));

    let original = retrieve_facts(q("q3"), &db, DEFAULT_TEXT_CAP);
    let text = substitute_subjects(&original, q("q3"), q("q4"), &db).unwrap();
    let fake = &text.facts()[0];
    assert_eq!(fake.subject, "wallst");
    assert_eq!(fake.object, "herod");
    assert_eq!(fake.tokens(), original.facts()[0].tokens());

    let err = substitute_subjects(&original, q("q5"), q("q3"), &db).unwrap_err();
    assert!(matches!(err, Error::EntityCountMismatch { donor: 2, target: 1 }));
}

#[test]
fn save_then_load_keeps_the_content_hash() {
    let corpus = generate_synthetic_corpus(&SynthConfig::default(), 7).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let facts = dir.path().join("facts.jsonl");
    let provenance = dir.path().join("provenance.jsonl");
    save_database(&corpus.db, &facts).unwrap();
    save_provenance(&corpus.provenance, &provenance).unwrap();
    let db = load_database(&facts).unwrap();
    assert_eq!(db.content_hash(), corpus.db.content_hash());
    assert_eq!(db.sizes(), corpus.db.sizes());
    assert_eq!(load_provenance(&provenance).unwrap(), corpus.provenance);
    assert!(matches!(load_database(dir.path().join("missing.jsonl")), Err(Error::Io { .. })));
}

#[test]
fn same_seed_same_bytes() {
    let a = generate_synthetic_corpus(&SynthConfig::default(), 7).unwrap();
    let b = generate_synthetic_corpus(&SynthConfig::default(), 7).unwrap();
    let c = generate_synthetic_corpus(&SynthConfig::default(), 8).unwrap();
    assert_eq!(a.db.to_canonical_jsonl(), b.db.to_canonical_jsonl());
    assert_ne!(a.db.content_hash(), c.db.content_hash());
}

fn check_corpus_invariants(db: &FactDatabase, planted: impl Fn(&str) -> Option<String>) {
    // Re-parsing runs every database validation again.
    let reparsed = parse_database(&db.to_canonical_jsonl()).unwrap();
    assert_eq!(reparsed.content_hash(), db.content_hash());
    for f in db.facts() {
        if let FactBody::Text { tokens } = &f.body {
            assert_eq!(tokens.iter().filter(|t| *t == SUBJECT_SLOT).count(), 1);
            assert_eq!(tokens.iter().filter(|t| *t == OBJECT_SLOT).count(), 1);
        }
    }
    for q in db.queries() {
        let planted = planted(&q.id).expect("every query has a planted fact");
        let fact = db.fact(&planted).unwrap();
        assert_eq!(fact.object, q.answer);
        let facts = retrieve_facts(q, db, DEFAULT_TEXT_CAP);
        assert!(facts.contains(&planted));
        let supporting = facts.iter().filter(|f| f.object == q.answer).count();
        assert_eq!(supporting, 1, "query {} has distractors pointing at its answer", q.id);
    }
}

#[test]
fn generated_corpora_satisfy_invariants_across_seeds() {
    let cfg = SynthConfig {
        entities: 12,
        relations: 4,
        facts_per_entity: 3,
        queries_per_entity: 2,
        vocab_size: 20,
        ..SynthConfig::default()
    };
    for seed in 0..100 {
        let corpus = generate_synthetic_corpus(&cfg, seed).unwrap();
        assert_eq!(corpus.provenance.entries.len(), corpus.db.queries().len());
        check_corpus_invariants(&corpus.db, |q| corpus.provenance.planted_for(q).map(str::to_string));
    }
}

#[test]
fn both_fact_kinds_appear() {
    let corpus = generate_synthetic_corpus(&SynthConfig::default(), 1).unwrap();
    let kinds: HashSet<FactKind> = corpus.db.facts().iter().map(|f| f.kind()).collect();
    assert_eq!(kinds.len(), 2);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn retrieval_and_substitution_properties(seed in 0u64..1_000, cap in 0usize..4) {
        let corpus = generate_synthetic_corpus(&SynthConfig { entities: 10, relations: 4, facts_per_entity: 3, queries_per_entity: 2, vocab_size: 20, ..SynthConfig::default() }, seed).unwrap();
        let db = &corpus.db;
        let queries = db.queries();
        for (i, q) in queries.iter().enumerate() {
            let entities: HashSet<&str> = q.entities(db).into_iter().collect();
            let facts = retrieve_facts(q, db, cap);
            prop_assert!(facts.iter().all(|f| entities.contains(f.subject.as_str())));
            prop_assert!(facts.iter().filter(|f| f.kind() == FactKind::Text).count() <= cap);
            let all_kb = db.kb_facts().filter(|f| entities.contains(f.subject.as_str())).count();
            prop_assert_eq!(facts.iter().filter(|f| f.kind() == FactKind::Kb).count(), all_kb);

            let target = &queries[(i + 1) % queries.len()];
            let fake = substitute_subjects(&facts, q, target, db).unwrap();
            prop_assert_eq!(fake.len(), facts.len());
            let target_subject = target.entities(db)[0];
            let originals: Vec<_> = facts.iter().collect();
            for f in fake.iter() {
                let source = originals.iter().find(|o| format!("{FAKE_PREFIX}{}", o.id) == f.id).unwrap();
                prop_assert_eq!(f.kind(), source.kind());
                prop_assert_eq!(f.relation(), source.relation());
                prop_assert_eq!(&f.object, &source.object);
                prop_assert_eq!(f.tokens(), source.tokens());
                prop_assert_eq!(f.subject.as_str(), target_subject);
            }
        }
    }
}
