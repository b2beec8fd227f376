//! Paired comparison study: two models that agree on an answer, the top-k
//! facts each one's explanation picks, and annotators saying which list
//! explains the answer better.

mod report;
mod store;

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::{explain, top_k, ExplainConfig, Method, DEFAULT_TOP_K};
use crate::knowledge::{retrieve_facts, Fact, FactBody, FactDatabase, Query, BLANK, OBJECT_SLOT, SUBJECT_SLOT};
use crate::model::MemoryNetwork;
use crate::seed;

pub use report::{aggregate_score, report, MethodReport, StudyReport, VoteDistribution};
pub use store::VoteStore;

/// Methods compared in the study by default.
pub fn default_methods() -> Vec<Method> {
    vec![Method::AttentionAverage, Method::Lime, Method::InputPerturbation]
}

/// How an unknown entity slot or answer blank is shown to annotators.
pub const DISPLAY_BLANK: &str = "___";

/// The five options, in on-screen order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Choice {
    DefinitelyLeft,
    RatherLeft,
    Difficult,
    RatherRight,
    DefinitelyRight,
}

impl Choice {
    pub const ALL: [Choice; 5] = [
        Choice::DefinitelyLeft,
        Choice::RatherLeft,
        Choice::Difficult,
        Choice::RatherRight,
        Choice::DefinitelyRight,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Choice::DefinitelyLeft => "definitely-left",
            Choice::RatherLeft => "rather-left",
            Choice::Difficult => "difficult",
            Choice::RatherRight => "rather-right",
            Choice::DefinitelyRight => "definitely-right",
        }
    }

    /// Map a screen-side judgment onto models given where model A was shown.
    pub fn resolve(self, model_a: Side) -> Preference {
        let index = Choice::ALL.iter().position(|&c| c == self).expect("listed");
        let index = match model_a {
            Side::Left => index,
            Side::Right => 4 - index,
        };
        Preference::ALL[index]
    }

    pub fn mirrored(self) -> Choice {
        let index = Choice::ALL.iter().position(|&c| c == self).expect("listed");
        Choice::ALL[4 - index]
    }
}

impl FromStr for Choice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Choice::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::InvalidChoice(s.to_string()))
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flipped(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
}

/// A vote after undoing the left/right presentation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preference {
    DefinitelyA,
    RatherA,
    Difficult,
    RatherB,
    DefinitelyB,
}

impl Preference {
    pub const ALL: [Preference; 5] = [
        Preference::DefinitelyA,
        Preference::RatherA,
        Preference::Difficult,
        Preference::RatherB,
        Preference::DefinitelyB,
    ];

    /// Trust placed in model A.
    pub fn weight(self) -> f64 {
        match self {
            Preference::DefinitelyA => 1.0,
            Preference::RatherA => 0.75,
            Preference::Difficult => 0.5,
            Preference::RatherB => 0.25,
            Preference::DefinitelyB => 0.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedFact {
    pub fact_id: String,
    pub text: String,
}

/// A generated task, including which side shows model A.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StudyTask {
    pub task_id: String,
    pub query_id: String,
    pub query: String,
    pub answer: String,
    pub answer_surface: String,
    pub method: Method,
    pub left: Vec<RenderedFact>,
    pub right: Vec<RenderedFact>,
    pub model_a: Side,
}

/// What annotators see: the task minus the side assignment and any ids that
/// could tell the models apart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PublicTask {
    pub task_id: String,
    pub query: String,
    pub answer: String,
    pub left: Vec<String>,
    pub right: Vec<String>,
}

impl StudyTask {
    pub fn public(&self) -> PublicTask {
        PublicTask {
            task_id: self.task_id.clone(),
            query: self.query.clone(),
            answer: self.answer_surface.clone(),
            left: self.left.iter().map(|f| f.text.clone()).collect(),
            right: self.right.iter().map(|f| f.text.clone()).collect(),
        }
    }

    /// Both lists hold the same facts in the same order.
    pub fn identical_lists(&self) -> bool {
        self.left.len() == self.right.len() && self.left.iter().zip(&self.right).all(|(l, r)| l.fact_id == r.fact_id)
    }

    fn list(&self, side: Side) -> &[RenderedFact] {
        match side {
            Side::Left => &self.left,
            Side::Right => &self.right,
        }
    }

    pub fn model_a_list(&self) -> &[RenderedFact] {
        self.list(self.model_a)
    }

    pub fn model_b_list(&self) -> &[RenderedFact] {
        self.list(self.model_a.flipped())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub task_id: String,
    pub annotator: String,
    pub choice: Choice,
    /// Milliseconds since the Unix epoch.
    pub timestamp_ms: u64,
}

/// Query tokens with entity ids replaced by surfaces and the blank shown.
pub fn render_query(query: &Query, db: &FactDatabase) -> String {
    query
        .tokens
        .iter()
        .map(|t| if t == BLANK { DISPLAY_BLANK } else { db.surface(t) })
        .collect::<Vec<_>>()
        .join(" ")
}

/// KB facts as `subject — relation — object`; text facts as the sentence
/// with the subject inlined and the object slot left as the blank.
pub fn render_fact(fact: &Fact, db: &FactDatabase) -> String {
    match &fact.body {
        FactBody::Kb { relation } => {
            format!("{} — {} — {}", db.surface(&fact.subject), relation, db.surface(&fact.object))
        }
        FactBody::Text { tokens } => tokens
            .iter()
            .map(|t| match t.as_str() {
                SUBJECT_SLOT => db.surface(&fact.subject),
                OBJECT_SLOT => DISPLAY_BLANK,
                other => db.surface(other),
            })
            .collect::<Vec<_>>()
            .join(" "),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StudyConfig {
    pub methods: Vec<Method>,
    pub k: usize,
    pub lime_samples: usize,
    pub seed: u64,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            methods: default_methods(),
            k: DEFAULT_TOP_K,
            lime_samples: crate::explain::DEFAULT_LIME_SAMPLES,
            seed: 0,
        }
    }
}

/// Model B must be measurably worse, or the study cannot tell the
/// explanations apart from noise.
pub fn check_model_gap(accuracy_a: f64, accuracy_b: f64) -> Result<()> {
    if accuracy_b < accuracy_a {
        Ok(())
    } else {
        Err(Error::Precondition(format!(
            "model B held-out accuracy {accuracy_b:.3} is not below model A's {accuracy_a:.3}"
        )))
    }
}

/// One task per (agreeing query, method). Methods rotate per query so
/// consecutive tasks do not share one; sides are drawn per task.
pub fn generate_tasks(
    model_a: &MemoryNetwork,
    model_b: &MemoryNetwork,
    db: &FactDatabase,
    queries: &[&Query],
    cfg: &StudyConfig,
) -> Result<Vec<StudyTask>> {
    if cfg.methods.is_empty() {
        return Err(Error::Precondition("study needs at least one method".into()));
    }
    if cfg.k == 0 {
        return Err(Error::Precondition("k must be at least 1".into()));
    }
    let explain_cfg = ExplainConfig {
        lime_samples: cfg.lime_samples,
        seed: seed::derive(cfg.seed, &["explain"]),
    };
    let mut tasks = Vec::new();
    let mut agreeing = 0usize;
    for q in queries {
        let facts = retrieve_facts(q, db, model_a.config.text_cap);
        if facts.is_empty() {
            continue;
        }
        let ex_a = explain(model_a, q, &facts, &cfg.methods, &explain_cfg)?;
        let ex_b = explain(model_b, q, &facts, &cfg.methods, &explain_cfg)?;
        if ex_a.answer != ex_b.answer {
            continue;
        }
        let n = cfg.methods.len();
        for j in 0..n {
            let method = cfg.methods[(agreeing + j) % n];
            let render = |ex: &crate::explain::Explanation| -> Vec<RenderedFact> {
                let rv = ex.get(method).expect("requested method");
                top_k(rv, cfg.k)
                    .into_iter()
                    .map(|(id, _)| RenderedFact {
                        fact_id: id.to_string(),
                        text: render_fact(facts.facts().iter().find(|f| f.id == id).expect("own fact"), db),
                    })
                    .collect()
            };
            let (list_a, list_b) = (render(&ex_a), render(&ex_b));
            let task_id = format!("t{:05}", tasks.len());
            let model_a_side = if seed::rng(cfg.seed, &["sides", &task_id]).random_bool(0.5) {
                Side::Left
            } else {
                Side::Right
            };
            let (left, right) = match model_a_side {
                Side::Left => (list_a, list_b),
                Side::Right => (list_b, list_a),
            };
            tasks.push(StudyTask {
                task_id,
                query_id: q.id.clone(),
                query: render_query(q, db),
                answer: ex_a.answer.clone(),
                answer_surface: db.surface(&ex_a.answer).to_string(),
                method,
                left,
                right,
                model_a: model_a_side,
            });
        }
        agreeing += 1;
    }
    if tasks.is_empty() {
        return Err(Error::EmptyAgreement);
    }
    Ok(tasks)
}

pub fn save_tasks(tasks: &[StudyTask], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for t in tasks {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn load_tasks(path: impl AsRef<Path>) -> Result<Vec<StudyTask>> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut tasks: Vec<StudyTask> = Vec::new();
    for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        tasks.push(serde_json::from_str(line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    let mut seen = HashMap::new();
    for (i, t) in tasks.iter().enumerate() {
        if let Some(first) = seen.insert(t.task_id.as_str(), i) {
            return Err(Error::Invalid(format!("task `{}` appears on lines {} and {}", t.task_id, first + 1, i + 1)));
        }
    }
    Ok(tasks)
}

/// Tasks plus votes, with a per-annotator serving order.
pub struct Study {
    tasks: Vec<StudyTask>,
    index: HashMap<String, usize>,
    store: VoteStore,
    seed: u64,
}

impl Study {
    pub fn new(tasks: Vec<StudyTask>, store: VoteStore, seed: u64) -> Result<Self> {
        let index: HashMap<String, usize> = tasks.iter().enumerate().map(|(i, t)| (t.task_id.clone(), i)).collect();
        if index.len() != tasks.len() {
            return Err(Error::Invalid("duplicate task ids".into()));
        }
        for v in store.snapshot() {
            if !index.contains_key(&v.task_id) {
                return Err(Error::UnknownTask(v.task_id));
            }
        }
        Ok(Study { tasks, index, store, seed })
    }

    pub fn tasks(&self) -> &[StudyTask] {
        &self.tasks
    }

    pub fn task(&self, task_id: &str) -> Option<&StudyTask> {
        self.index.get(task_id).map(|&i| &self.tasks[i])
    }

    pub fn store(&self) -> &VoteStore {
        &self.store
    }

    /// Task indices in the order one annotator is served them.
    pub fn order_for(&self, annotator: &str) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.tasks.len()).collect();
        order.shuffle(&mut seed::rng(self.seed, &["serve-order", annotator]));
        order
    }

    /// The first task in this annotator's order they have not voted on.
    pub fn next_task(&self, annotator: &str) -> Option<&StudyTask> {
        self.order_for(annotator)
            .into_iter()
            .map(|i| &self.tasks[i])
            .find(|t| !self.store.has_voted(&t.task_id, annotator))
    }

    pub fn record_vote(&self, task_id: &str, annotator: &str, choice: &str, timestamp_ms: u64) -> Result<Vote> {
        let choice: Choice = choice.parse()?;
        if annotator.trim().is_empty() {
            return Err(Error::Invalid("annotator id must not be empty".into()));
        }
        if self.task(task_id).is_none() {
            return Err(Error::UnknownTask(task_id.to_string()));
        }
        self.store.append(Vote {
            task_id: task_id.to_string(),
            annotator: annotator.to_string(),
            choice,
            timestamp_ms,
        })
    }

    pub fn report(&self) -> StudyReport {
        report(&self.tasks, &self.store.snapshot())
    }
}
