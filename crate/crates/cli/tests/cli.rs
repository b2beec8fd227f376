use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use factlens_cli::RunManifest;
use serde_json::Value;

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_factlens"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("FACTLENS_DB")
        .env_remove("FACTLENS_OUT")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run_in(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

/// A small trained pipeline shared by the read-only tests.
fn workspace() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        ok(dir.path(), &["gen", "--entities", "20", "--seed", "3", "--out", "corpus"]);
        ok(dir.path(), &["train", "--db", "corpus/facts.jsonl", "--epochs", "8", "--seed", "3", "--out", "model"]);
        dir
    })
    .path()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let out = run_in(workspace(), &["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn bad_flags_are_usage_errors() {
    let dir = workspace();
    assert_eq!(run_in(dir, &["gen"]).status.code(), Some(2), "missing --out");
    assert_eq!(run_in(dir, &["gen", "--entities", "many", "--out", "x"]).status.code(), Some(2));
    let bad_method = run_in(dir, &["explain", "--db", "a", "--model", "b", "--method", "shap", "--out", "x"]);
    assert_eq!(bad_method.status.code(), Some(2));
}

#[test]
fn help_exits_zero_per_subcommand() {
    for sub in ["gen", "train", "answer", "explain", "pointing-game", "make-study", "serve", "report"] {
        let out = run_in(workspace(), &[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("--"), "{sub}");
    }
}

#[test]
fn domain_errors_exit_one() {
    let dir = workspace();
    let missing = run_in(dir, &["train", "--db", "nope.jsonl", "--out", "m"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("nope.jsonl"));
    let infeasible = run_in(dir, &["gen", "--entities", "3", "--out", "tiny"]);
    assert_eq!(infeasible.status.code(), Some(1));
    let unknown_query = run_in(
        dir,
        &["explain", "--db", "corpus/facts.jsonl", "--model", "model/model.json", "--query-id", "q-none", "--out", "e"],
    );
    assert_eq!(unknown_query.status.code(), Some(1));
    // The same model twice has no quality gap.
    let no_gap = run_in(
        dir,
        &[
            "make-study", "--db", "corpus/facts.jsonl", "--model-a", "model/model.json", "--model-b", "model/model.json",
            "--out", "s",
        ],
    );
    assert_eq!(no_gap.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&no_gap.stderr).contains("model B"));
}

#[test]
fn gen_writes_corpus_provenance_and_manifest() {
    let dir = workspace();
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(dir.join("corpus/gen.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest.subcommand, "gen");
    assert_eq!(manifest.seed, 3);
    assert!(manifest.sub_seeds.contains_key("corpus"));
    assert_eq!(manifest.config["entities"], 20);
    for name in ["corpus/facts.jsonl", "corpus/provenance.jsonl"] {
        let hash = factlens_cli::manifest::hash_file(&dir.join(name)).unwrap();
        assert_eq!(manifest.outputs[name], hash);
    }
    let provenance = std::fs::read_to_string(dir.join("corpus/provenance.jsonl")).unwrap();
    let first: Value = serde_json::from_str(provenance.lines().next().unwrap()).unwrap();
    assert!(first["query_id"].is_string() && first["planted_fact_id"].is_string());
}

#[test]
fn explain_emits_one_dump_line_per_method() {
    let dir = workspace();
    let facts = std::fs::read_to_string(dir.join("corpus/facts.jsonl")).unwrap();
    let query_id = facts
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .find(|v| v.get("answer").is_some())
        .unwrap()["id"]
        .as_str()
        .unwrap()
        .to_string();
    ok(
        dir,
        &[
            "explain", "--db", "corpus/facts.jsonl", "--model", "model/model.json", "--method", "ip,aw2", "--query-id",
            &query_id, "--out", "one",
        ],
    );
    let dump = std::fs::read_to_string(dir.join("one/explanations.jsonl")).unwrap();
    let lines: Vec<Value> = dump.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["method"], "ip");
    assert_eq!(lines[1]["method"], "aw2");
    assert!(lines.iter().all(|l| l["query_id"] == query_id.as_str()));
    let attention: f64 = lines[1]["scores"].as_array().unwrap().iter().map(|s| s["score"].as_f64().unwrap()).sum();
    assert!((attention - 1.0).abs() < 1e-9);
}

#[test]
fn answers_cover_every_query() {
    let dir = workspace();
    ok(dir, &["answer", "--db", "corpus/facts.jsonl", "--model", "model/model.json", "--out", "answers"]);
    let answers = std::fs::read_to_string(dir.join("answers/answers.jsonl")).unwrap();
    let facts = std::fs::read_to_string(dir.join("corpus/facts.jsonl")).unwrap();
    let queries = facts.lines().filter(|l| l.contains("\"answer\"")).count();
    assert_eq!(answers.lines().count(), queries);
    let first: Value = serde_json::from_str(answers.lines().next().unwrap()).unwrap();
    assert!(first["correct"].is_boolean());
}

#[test]
fn paths_can_come_from_the_environment() {
    let dir = workspace();
    let out = Command::new(env!("CARGO_BIN_EXE_factlens"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env("FACTLENS_DB", "corpus/facts.jsonl")
        .env("FACTLENS_MODEL", "model/model.json")
        .env("FACTLENS_OUT", "from-env")
        .arg("answer")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("from-env/answers.jsonl").exists());
}

#[test]
fn report_on_an_empty_log_has_no_scores() {
    let dir = tempfile::tempdir().unwrap();
    let tasks = dir.path().join("tasks.jsonl");
    let task = serde_json::json!({
        "task_id": "t0", "query_id": "q0", "query": "x ___", "answer": "e1", "answer_surface": "Mira",
        "method": "ip", "left": [], "right": [], "model_a": "left"
    });
    std::fs::write(&tasks, format!("{task}\n")).unwrap();
    let out = run_in(dir.path(), &["report", "--tasks", "tasks.jsonl", "--votes", "votes.jsonl"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["total_votes"], 0);
    assert!(report["methods"][0]["aggregate_score"].is_null());
    assert!(!dir.path().join("votes.jsonl").exists(), "report must not create the vote log");
}
