//! The `factlens` command line: every pipeline stage as a subcommand.
//!
//! All randomness flows from one `--seed`, fanned out to named sub-seeds
//! that each run records in its manifest.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use factlens_core::explain::{dump_lines, explain, ExplainConfig, Method, DEFAULT_LIME_SAMPLES, DEFAULT_TOP_K};
use factlens_core::hybrid::{evaluate, summarize, EvalConfig, DEFAULT_ALPHA, DEFAULT_MAX_RETRIES};
use factlens_core::knowledge::{
    generate_synthetic_corpus, load_database, retrieve_facts, save_database, save_provenance, FactDatabase, Query,
    SynthConfig,
};
use factlens_core::model::{accuracy, load_checkpoint, save_checkpoint, train, HopSharing, MemoryNetwork, ModelConfig};
use factlens_core::seed;
use factlens_core::study::{
    check_model_gap, default_methods, generate_tasks, load_tasks, report, save_tasks, Study, StudyConfig, VoteStore,
};
use serde::Serialize;
use serde_json::json;

pub mod manifest;

pub use manifest::RunManifest;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] factlens_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Parser)]
#[command(name = "factlens", version, about = "Fact-level explanations for a key-value memory QA model")]
pub struct Cli {
    /// Run seed; every random component derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus with one planted supporting fact per query.
    Gen(GenArgs),
    /// Train a memory network on a fact database.
    Train(TrainArgs),
    /// Answer queries with a trained model.
    Answer(AnswerArgs),
    /// Score each retrieved fact's relevance to the predicted answer.
    Explain(ExplainArgs),
    /// Run the hybrid-document pointing game over all queries.
    PointingGame(PointingGameArgs),
    /// Build pairwise study tasks from a strong and a weak model.
    MakeStudy(MakeStudyArgs),
    /// Serve study tasks and record votes over HTTP.
    Serve(ServeArgs),
    /// Aggregate a vote log into per-method scores.
    Report(ReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct GenArgs {
    #[arg(long, default_value_t = 50)]
    pub entities: usize,
    #[arg(long, default_value_t = 5)]
    pub relations: usize,
    #[arg(long, default_value_t = 5)]
    pub facts_per_entity: usize,
    #[arg(long, default_value_t = 5)]
    pub queries_per_entity: usize,
    #[arg(long, default_value_t = 40)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 3)]
    pub cue_words: usize,
    #[arg(long, default_value_t = 0.5)]
    pub text_fraction: f64,
    #[arg(long, env = "FACTLENS_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct TrainArgs {
    #[arg(long, env = "FACTLENS_DB")]
    pub db: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub embed_dim: usize,
    #[arg(long, default_value_t = 3)]
    pub hops: usize,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 4)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value = "per-hop")]
    pub hop_sharing: HopSharingArg,
    /// Train for a fifth of `--epochs` (at least one): the weaker study model.
    #[arg(long)]
    pub short_schedule: bool,
    #[arg(long, env = "FACTLENS_OUT")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, clap::ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HopSharingArg {
    PerHop,
    Shared,
}

#[derive(Debug, Args, Serialize)]
pub struct ModelInput {
    #[arg(long, env = "FACTLENS_DB")]
    pub db: PathBuf,
    #[arg(long, env = "FACTLENS_MODEL")]
    pub model: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AnswerArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Only these queries (repeatable); all queries by default.
    #[arg(long = "query-id")]
    pub query_ids: Vec<String>,
    #[arg(long, env = "FACTLENS_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Comma-separated method tags: aw1..awH, awavg, lime, ip, random.
    #[arg(long = "method", alias = "methods", value_delimiter = ',', default_value = "ip")]
    #[serde(serialize_with = "tags")]
    pub methods: Vec<Method>,
    #[arg(long = "query-id")]
    pub query_ids: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_LIME_SAMPLES)]
    pub lime_samples: usize,
    #[arg(long, env = "FACTLENS_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct PointingGameArgs {
    #[command(flatten)]
    pub input: ModelInput,
    /// Defaults to aw1, aw<hops>, awavg, lime, ip, random.
    #[arg(long, value_delimiter = ',')]
    #[serde(serialize_with = "tags")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = DEFAULT_MAX_RETRIES)]
    pub max_retries: usize,
    #[arg(long, default_value_t = DEFAULT_LIME_SAMPLES)]
    pub lime_samples: usize,
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub alpha: f64,
    #[arg(long, env = "FACTLENS_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MakeStudyArgs {
    #[arg(long, env = "FACTLENS_DB")]
    pub db: PathBuf,
    #[arg(long)]
    pub model_a: PathBuf,
    #[arg(long)]
    pub model_b: PathBuf,
    /// Defaults to awavg, lime, ip.
    #[arg(long, value_delimiter = ',')]
    #[serde(serialize_with = "tags")]
    pub methods: Vec<Method>,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub k: usize,
    #[arg(long, default_value_t = DEFAULT_LIME_SAMPLES)]
    pub lime_samples: usize,
    #[arg(long, env = "FACTLENS_OUT")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct ServeArgs {
    #[arg(long, env = "FACTLENS_TASKS")]
    pub tasks: PathBuf,
    #[arg(long, env = "FACTLENS_VOTES")]
    pub votes: PathBuf,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of static front-end assets served under `/`.
    #[arg(long, env = "FACTLENS_STATIC_DIR")]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct ReportArgs {
    #[arg(long, env = "FACTLENS_TASKS")]
    pub tasks: PathBuf,
    #[arg(long, env = "FACTLENS_VOTES")]
    pub votes: PathBuf,
    #[arg(long, env = "FACTLENS_OUT")]
    pub out: Option<PathBuf>,
}

fn tags<S: serde::Serializer>(methods: &[Method], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(methods.iter().map(Method::tag))
}

pub fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen(a) => gen(&a, seed),
        Command::Train(a) => train_cmd(&a, seed),
        Command::Answer(a) => answer(&a, seed),
        Command::Explain(a) => explain_cmd(&a, seed),
        Command::PointingGame(a) => pointing_game(&a, seed),
        Command::MakeStudy(a) => make_study(&a, seed),
        Command::Serve(a) => serve(&a, seed),
        Command::Report(a) => report_cmd(&a, seed),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_jsonl(path: &Path, lines: impl IntoIterator<Item = String>) -> Result<()> {
    let mut text = String::new();
    for line in lines {
        text.push_str(&line);
        text.push('\n');
    }
    manifest::write_file(path, text.as_bytes())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    manifest::write_file(path, text.as_bytes())
}

fn load_model(input: &ModelInput, manifest: &mut RunManifest) -> Result<(FactDatabase, MemoryNetwork)> {
    let db = load_database(&input.db)?;
    let (net, _) = load_checkpoint(&input.model)?;
    manifest.input(&input.db)?;
    manifest.input(&input.model)?;
    Ok((db, net))
}

fn select_queries<'a>(db: &'a FactDatabase, ids: &[String]) -> Result<Vec<&'a Query>> {
    if ids.is_empty() {
        return Ok(db.queries().iter().collect());
    }
    ids.iter()
        .map(|id| db.query(id).ok_or_else(|| CliError::Domain(format!("unknown query id `{id}`"))))
        .collect()
}

fn gen(a: &GenArgs, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        entities: a.entities,
        relations: a.relations,
        facts_per_entity: a.facts_per_entity,
        queries_per_entity: a.queries_per_entity,
        vocab_size: a.vocab_size,
        cue_words_per_relation: a.cue_words,
        text_fraction: a.text_fraction,
    };
    let mut m = RunManifest::new("gen", seed, &cfg)?;
    let corpus_seed = m.sub_seed("corpus", seed::derive(seed, &["corpus"]));
    let corpus = generate_synthetic_corpus(&cfg, corpus_seed)?;
    create_dir(&a.out)?;
    let facts = a.out.join("facts.jsonl");
    let provenance = a.out.join("provenance.jsonl");
    save_database(&corpus.db, &facts)?;
    save_provenance(&corpus.provenance, &provenance)?;
    m.output(&facts)?;
    m.output(&provenance)?;
    m.write(&a.out)?;
    let (e, f, q) = corpus.db.sizes();
    log::info!("wrote {e} entities, {f} facts, {q} queries to {}", a.out.display());
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    let db = load_database(&a.db)?;
    let epochs = if a.short_schedule { (a.epochs / 5).max(1) } else { a.epochs };
    let mut cfg = ModelConfig {
        embed_dim: a.embed_dim,
        hops: a.hops,
        learning_rate: a.learning_rate,
        epochs,
        batch_size: a.batch_size,
        hop_sharing: match a.hop_sharing {
            HopSharingArg::PerHop => HopSharing::PerHop,
            HopSharingArg::Shared => HopSharing::Shared,
        },
        ..ModelConfig::default()
    };
    let mut m = RunManifest::new("train", seed, json!({ "args": a, "model": &cfg }))?;
    cfg.seed = m.sub_seed("init", seed::derive(seed, &["init"]));
    m.config["model"] = serde_json::to_value(&cfg)?;
    m.input(&a.db)?;
    let started = Instant::now();
    let (net, training) = train(&db, &cfg)?;
    log::info!(
        "trained {} epochs in {:.1?}; final loss {:.4}, held-out accuracy {}",
        epochs,
        started.elapsed(),
        training.final_loss().unwrap_or(f64::NAN),
        training.heldout_accuracy.map_or("n/a".into(), |x| format!("{x:.3}"))
    );
    create_dir(&a.out)?;
    let model = a.out.join("model.json");
    save_checkpoint(&net, Some(&training), &model)?;
    m.output(&model)?;
    m.write(&a.out)?;
    Ok(())
}

#[derive(Serialize)]
struct AnswerLine<'a> {
    query_id: &'a str,
    answer: Option<String>,
    gold: &'a str,
    correct: bool,
    logit: Option<f64>,
}

fn answer(a: &AnswerArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("answer", seed, a)?;
    let (db, net) = load_model(&a.input, &mut m)?;
    let queries = select_queries(&db, &a.query_ids)?;
    let mut lines = Vec::with_capacity(queries.len());
    let mut correct = 0usize;
    for q in &queries {
        let facts = retrieve_facts(q, &db, net.config.text_cap);
        // Nothing retrieved means no answer, not a failed run.
        let (answer, logit) = match net.answer(q, &facts) {
            Ok(ans) => (Some(ans.entity.clone()), Some(ans.logits[ans.entity_index])),
            Err(factlens_core::Error::EmptyMemory) => (None, None),
            Err(e) => return Err(e.into()),
        };
        let ok = answer.as_deref() == Some(q.answer.as_str());
        correct += usize::from(ok);
        lines.push(serde_json::to_string(&AnswerLine {
            query_id: &q.id,
            answer,
            gold: &q.answer,
            correct: ok,
            logit,
        })?);
    }
    create_dir(&a.out)?;
    let out = a.out.join("answers.jsonl");
    write_jsonl(&out, lines)?;
    m.output(&out)?;
    m.write(&a.out)?;
    log::info!("{correct} of {} answered correctly", queries.len());
    Ok(())
}

fn explain_cmd(a: &ExplainArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("explain", seed, a)?;
    let (db, net) = load_model(&a.input, &mut m)?;
    let cfg = ExplainConfig {
        lime_samples: a.lime_samples,
        seed: m.sub_seed("explain", seed::derive(seed, &["explain"])),
    };
    let mut lines = Vec::new();
    for q in select_queries(&db, &a.query_ids)? {
        let facts = retrieve_facts(q, &db, net.config.text_cap);
        if facts.is_empty() {
            log::warn!("query {} retrieves no facts; nothing to explain", q.id);
            continue;
        }
        lines.extend(dump_lines(&explain(&net, q, &facts, &a.methods, &cfg)?));
    }
    create_dir(&a.out)?;
    let out = a.out.join("explanations.jsonl");
    write_jsonl(&out, lines)?;
    m.output(&out)?;
    m.write(&a.out)?;
    Ok(())
}

fn pointing_game(a: &PointingGameArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("pointing-game", seed, a)?;
    let (db, net) = load_model(&a.input, &mut m)?;
    let methods = if a.methods.is_empty() { Method::standard(net.config.hops) } else { a.methods.clone() };
    m.config["methods"] = json!(methods.iter().map(Method::tag).collect::<Vec<_>>());
    let cfg = EvalConfig {
        seed: m.sub_seed("pointing-game", seed::derive(seed, &["pointing-game"])),
        max_retries: a.max_retries,
        lime_samples: a.lime_samples,
        alpha: a.alpha,
    };
    let queries: Vec<&Query> = db.queries().iter().collect();
    let started = Instant::now();
    let eval = evaluate(&queries, &db, &net, &methods, &cfg)?;
    log::info!("pointing game over {} instances took {:.1?}", eval.kept, started.elapsed());
    let summary = summarize(&eval, cfg.alpha)?;
    for s in &summary {
        log::info!("{:>7}: {}/{} = {:.3}", s.method.tag(), s.hits, s.total, s.accuracy);
    }

    create_dir(&a.out)?;
    let results = a.out.join("results.json");
    write_json(
        &results,
        &json!({
            "queries": eval.queries,
            "kept": eval.kept,
            "skipped": eval.skipped,
            "methods": summary,
            "random_baseline": eval.random_baseline,
        }),
    )?;
    let hits = a.out.join("hits.jsonl");
    let hit_lines: Vec<String> = eval.game.log.iter().map(serde_json::to_string).collect::<Result<_, _>>()?;
    write_jsonl(&hits, hit_lines)?;
    let instances = a.out.join("instances.jsonl");
    let mut lines = Vec::new();
    for inst in &eval.instances {
        lines.push(serde_json::to_string(&json!({
            "query_id": inst.query_id,
            "status": "kept",
            "donor_query_id": inst.donor_query_id,
            "answer": inst.answer,
            "real": inst.real,
            "fake": inst.fake,
        }))?);
    }
    for (query_id, reason) in &eval.skips {
        lines.push(serde_json::to_string(&json!({ "query_id": query_id, "status": "skipped", "skip": reason }))?);
    }
    write_jsonl(&instances, lines)?;
    for p in [&results, &hits, &instances] {
        m.output(p)?;
    }
    m.write(&a.out)?;
    Ok(())
}

fn make_study(a: &MakeStudyArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("make-study", seed, a)?;
    let db = load_database(&a.db)?;
    let (model_a, training_a) = load_checkpoint(&a.model_a)?;
    let (model_b, _) = load_checkpoint(&a.model_b)?;
    for p in [&a.db, &a.model_a, &a.model_b] {
        m.input(p)?;
    }

    // Both models are scored on model A's held-out split.
    let heldout: Vec<&Query> = match &training_a {
        Some(t) if !t.heldout_queries.is_empty() => t.heldout_queries.iter().filter_map(|id| db.query(id)).collect(),
        _ => db.queries().iter().collect(),
    };
    let (acc_a, acc_b) = (accuracy(&model_a, &db, &heldout), accuracy(&model_b, &db, &heldout));
    log::info!("held-out accuracy: model A {acc_a:.3}, model B {acc_b:.3}");
    check_model_gap(acc_a, acc_b)?;
    m.config["accuracy"] = json!({ "model_a": acc_a, "model_b": acc_b, "queries": heldout.len() });

    let methods = if a.methods.is_empty() { default_methods() } else { a.methods.clone() };
    m.config["methods"] = json!(methods.iter().map(Method::tag).collect::<Vec<_>>());
    let cfg = StudyConfig {
        methods,
        k: a.k,
        lime_samples: a.lime_samples,
        seed: m.sub_seed("sides", seed::derive(seed, &["sides"])),
    };
    let queries: Vec<&Query> = db.queries().iter().collect();
    let tasks = generate_tasks(&model_a, &model_b, &db, &queries, &cfg)?;
    log::info!("{} tasks generated", tasks.len());
    create_dir(&a.out)?;
    let out = a.out.join("tasks.jsonl");
    save_tasks(&tasks, &out)?;
    m.output(&out)?;
    m.write(&a.out)?;
    Ok(())
}

fn serve(a: &ServeArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("serve", seed, a)?;
    let tasks = load_tasks(&a.tasks)?;
    m.input(&a.tasks)?;
    let order_seed = m.sub_seed("serve-order", seed::derive(seed, &["serve-order"]));
    let study = Arc::new(Study::new(tasks, VoteStore::open(&a.votes)?, order_seed)?);
    let dir = a.votes.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    m.write(dir)?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| CliError::Domain(format!("bad listen address {}:{}: {e}", a.host, a.port)))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Domain(format!("cannot start runtime: {e}")))?;
    runtime
        .block_on(factlens_server::serve(study, addr, a.static_dir.clone()))
        .map_err(|e| CliError::Domain(format!("server failed on {addr}: {e}")))
}

fn report_cmd(a: &ReportArgs, seed: u64) -> Result<()> {
    let mut m = RunManifest::new("report", seed, a)?;
    let tasks = load_tasks(&a.tasks)?;
    // Read-only: an absent log is an empty study, and nothing is created.
    let votes = if a.votes.exists() {
        m.input(&a.votes)?;
        VoteStore::open(&a.votes)?.snapshot()
    } else {
        Vec::new()
    };
    m.input(&a.tasks)?;
    let study = Study::new(tasks, VoteStore::in_memory(), 0)?;
    let unknown = votes.iter().find(|v| study.task(&v.task_id).is_none());
    if let Some(v) = unknown {
        return Err(factlens_core::Error::UnknownTask(v.task_id.clone()).into());
    }
    let rep = report(study.tasks(), &votes);
    if let Some(out) = &a.out {
        create_dir(out)?;
        let path = out.join("report.json");
        write_json(&path, &rep)?;
        m.output(&path)?;
        m.write(out)?;
    }
    let text = serde_json::to_string_pretty(&rep)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        // A reader that stops early (`| head`) is not a failed report.
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::io("<stdout>", e)),
        _ => Ok(()),
    }
}
