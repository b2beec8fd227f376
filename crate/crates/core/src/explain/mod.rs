//! Relevance scores over the retrieved facts of one query.
//!
//! Every method returns a [`RelevanceVector`] over the fact set in its stored
//! (id-sorted) order, so rankings from different methods line up.

mod lime;
mod perturb;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::knowledge::{FactSet, Query};
use crate::model::{Answer, BoundQuery, MemoryNetwork};
use crate::seed;

pub use lime::{fit_lime, SurrogateWeights, DEFAULT_LIME_SAMPLES, RIDGE_LAMBDA};
pub use perturb::{input_perturbation, IpScores, ZERO_LOGIT};

/// Subset scoring used by the perturbation explainers: the logit of a fixed
/// answer with only the masked-in facts in memory.
pub trait LogitModel: Sync {
    fn fact_count(&self) -> usize;
    fn logit(&self, mask: &[bool]) -> f64;
}

impl LogitModel for BoundQuery<'_> {
    fn fact_count(&self) -> usize {
        self.cells().len()
    }

    fn logit(&self, mask: &[bool]) -> f64 {
        self.logit_masked(mask)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    /// Attention weights at hop `j` (1-based).
    AttentionHop(usize),
    AttentionAverage,
    Lime,
    InputPerturbation,
    /// One uniformly chosen fact gets score 1.
    Random,
}

impl Method {
    pub fn tag(&self) -> String {
        match self {
            Method::AttentionHop(j) => format!("aw{j}"),
            Method::AttentionAverage => "awavg".into(),
            Method::Lime => "lime".into(),
            Method::InputPerturbation => "ip".into(),
            Method::Random => "random".into(),
        }
    }

    /// First hop, last hop, average, LIME, IP and the random baseline.
    pub fn standard(hops: usize) -> Vec<Method> {
        let mut methods = vec![Method::AttentionHop(1)];
        if hops > 1 {
            methods.push(Method::AttentionHop(hops));
        }
        methods.extend([Method::AttentionAverage, Method::Lime, Method::InputPerturbation, Method::Random]);
        methods
    }

    pub fn is_baseline(&self) -> bool {
        matches!(self, Method::Random)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "awavg" => Ok(Method::AttentionAverage),
            "lime" => Ok(Method::Lime),
            "ip" => Ok(Method::InputPerturbation),
            "random" => Ok(Method::Random),
            _ => s
                .strip_prefix("aw")
                .and_then(|j| j.parse::<usize>().ok())
                .filter(|&j| j >= 1)
                .map(Method::AttentionHop)
                .ok_or_else(|| Error::Invalid(format!("unknown explanation method `{s}`"))),
        }
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.tag())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Caveats attached to one relevance vector.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Flag {
    /// The surrogate design was rank-deficient; weights come from ridge.
    RidgeFallback,
    /// `|logit(ℱ)|` was below [`ZERO_LOGIT`]; scores are raw differences.
    Unnormalized,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceVector {
    pub method: Method,
    pub fact_ids: Vec<String>,
    pub scores: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<Flag>,
}

impl RelevanceVector {
    pub fn new(method: Method, facts: &FactSet, scores: Vec<f64>) -> Result<Self> {
        if scores.len() != facts.len() {
            return Err(Error::Invalid(format!(
                "{} scores for {} facts",
                scores.len(),
                facts.len()
            )));
        }
        if let Some(bad) = scores.iter().position(|s| !s.is_finite()) {
            return Err(Error::Invalid(format!("non-finite {method} score for fact `{}`", facts.facts()[bad].id)));
        }
        Ok(RelevanceVector {
            method,
            fact_ids: facts.ids().into_iter().map(str::to_string).collect(),
            scores,
            flags: Vec::new(),
        })
    }

    pub fn score(&self, fact_id: &str) -> Option<f64> {
        self.fact_ids.iter().position(|f| f == fact_id).map(|i| self.scores[i])
    }

    /// Highest-scoring fact; ties go to the smallest fact id.
    pub fn argmax(&self) -> Option<&str> {
        top_k(self, 1).into_iter().next().map(|(id, _)| id)
    }
}

/// The `k` best facts by descending score, ties by ascending fact id.
pub fn top_k(rv: &RelevanceVector, k: usize) -> Vec<(&str, f64)> {
    let mut ranked: Vec<(&str, f64)> = rv.fact_ids.iter().map(String::as_str).zip(rv.scores.iter().copied()).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked.truncate(k);
    ranked
}

pub const DEFAULT_TOP_K: usize = 5;

pub fn attention_scores(answer: &Answer, facts: &FactSet, method: Method) -> Result<RelevanceVector> {
    let rows = &answer.trace.attention;
    let scores = match method {
        Method::AttentionHop(j) => rows
            .get(j.wrapping_sub(1))
            .cloned()
            .ok_or(Error::HopOutOfRange { hop: j, hops: rows.len() })?,
        Method::AttentionAverage => {
            let mut mean = vec![0.0; facts.len()];
            for row in rows {
                for (m, a) in mean.iter_mut().zip(row) {
                    *m += a;
                }
            }
            mean.iter_mut().for_each(|m| *m /= rows.len() as f64);
            mean
        }
        other => return Err(Error::Precondition(format!("{other} is not an attention method"))),
    };
    RelevanceVector::new(method, facts, scores)
}

pub fn random_scores(facts: &FactSet, rng: &mut impl Rng) -> Result<RelevanceVector> {
    if facts.is_empty() {
        return Err(Error::EmptyMemory);
    }
    let mut scores = vec![0.0; facts.len()];
    scores[rng.random_range(0..facts.len())] = 1.0;
    RelevanceVector::new(Method::Random, facts, scores)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExplainConfig {
    pub lime_samples: usize,
    pub seed: u64,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        ExplainConfig {
            lime_samples: DEFAULT_LIME_SAMPLES,
            seed: 0,
        }
    }
}

/// The model's answer on one fact set with a relevance vector per method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub query_id: String,
    pub answer: String,
    pub relevance: Vec<RelevanceVector>,
}

impl Explanation {
    pub fn get(&self, method: Method) -> Option<&RelevanceVector> {
        self.relevance.iter().find(|r| r.method == method)
    }
}

/// Explain the model's own prediction on `facts`. Randomized methods draw
/// from sub-seeds of `cfg.seed` keyed by query id, so results do not depend
/// on which other queries are explained or in what order.
pub fn explain(network: &MemoryNetwork, query: &Query, facts: &FactSet, methods: &[Method], cfg: &ExplainConfig) -> Result<Explanation> {
    let answer = network.answer(query, facts)?;
    let bound = network.bind(query, facts, &answer.entity)?;
    let mut relevance = Vec::with_capacity(methods.len());
    for &method in methods {
        let rv = match method {
            Method::AttentionHop(_) | Method::AttentionAverage => attention_scores(&answer, facts, method)?,
            Method::Lime => {
                let fit = fit_lime(&bound, cfg.lime_samples, seed::derive(cfg.seed, &["lime", &query.id]))?;
                let mut rv = RelevanceVector::new(method, facts, fit.weights)?;
                if fit.ridge {
                    rv.flags.push(Flag::RidgeFallback);
                }
                rv
            }
            Method::InputPerturbation => {
                let ip = input_perturbation(&bound);
                let mut rv = RelevanceVector::new(method, facts, ip.scores)?;
                if !ip.normalized {
                    rv.flags.push(Flag::Unnormalized);
                }
                rv
            }
            Method::Random => random_scores(facts, &mut seed::rng(cfg.seed, &["random", &query.id]))?,
        };
        relevance.push(rv);
    }
    Ok(Explanation {
        query_id: query.id.clone(),
        answer: answer.entity,
        relevance,
    })
}

#[derive(Serialize, Deserialize)]
struct ScoreLine {
    fact_id: String,
    score: f64,
}

#[derive(Serialize, Deserialize)]
struct DumpLine {
    query_id: String,
    method: Method,
    answer: String,
    scores: Vec<ScoreLine>,
    flags: Vec<Flag>,
}

/// One JSON line per (query, method).
pub fn dump_lines(explanation: &Explanation) -> Vec<String> {
    explanation
        .relevance
        .iter()
        .map(|rv| {
            let line = DumpLine {
                query_id: explanation.query_id.clone(),
                method: rv.method,
                answer: explanation.answer.clone(),
                scores: rv
                    .fact_ids
                    .iter()
                    .zip(&rv.scores)
                    .map(|(f, &s)| ScoreLine {
                        fact_id: f.clone(),
                        score: s,
                    })
                    .collect(),
                flags: rv.flags.clone(),
            };
            serde_json::to_string(&line).expect("dump line serializes")
        })
        .collect()
}

/// Inverse of [`dump_lines`] over a whole file, regrouped by query.
pub fn parse_dump(content: &str) -> Result<Vec<Explanation>> {
    let mut out: Vec<Explanation> = Vec::new();
    for (i, raw) in content.lines().enumerate() {
        if raw.trim().is_empty() {
            continue;
        }
        let line: DumpLine = serde_json::from_str(raw).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        let rv = RelevanceVector {
            method: line.method,
            fact_ids: line.scores.iter().map(|s| s.fact_id.clone()).collect(),
            scores: line.scores.iter().map(|s| s.score).collect(),
            flags: line.flags,
        };
        match out.last_mut() {
            Some(last) if last.query_id == line.query_id => last.relevance.push(rv),
            _ => out.push(Explanation {
                query_id: line.query_id,
                answer: line.answer,
                relevance: vec![rv],
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::Fact;

    fn facts(n: usize) -> FactSet {
        FactSet::new((0..n).map(|i| Fact::kb(format!("f{i}"), "s", "r", "o")).collect()).unwrap()
    }

    #[test]
    fn method_tags_round_trip() {
        for m in Method::standard(3) {
            assert_eq!(m.tag().parse::<Method>().unwrap(), m);
        }
        assert_eq!(Method::standard(3).iter().map(Method::tag).collect::<Vec<_>>(), ["aw1", "aw3", "awavg", "lime", "ip", "random"]);
        assert!("aw0".parse::<Method>().is_err());
        assert!("shap".parse::<Method>().is_err());
    }

    #[test]
    fn top_k_orders_by_score_then_id() {
        let rv = RelevanceVector::new(Method::Lime, &facts(3), vec![0.1, 0.9, 0.5]).unwrap();
        assert_eq!(top_k(&rv, 2), vec![("f1", 0.9), ("f2", 0.5)]);
        let flat = RelevanceVector::new(Method::Lime, &facts(4), vec![0.3; 4]).unwrap();
        assert_eq!(top_k(&flat, 2).iter().map(|p| p.0).collect::<Vec<_>>(), ["f0", "f1"]);
        assert_eq!(top_k(&flat, 10).len(), 4);
    }

    #[test]
    fn mismatched_or_nonfinite_scores_are_rejected() {
        assert!(RelevanceVector::new(Method::Lime, &facts(3), vec![0.0; 2]).is_err());
        assert!(RelevanceVector::new(Method::Lime, &facts(2), vec![0.0, f64::NAN]).is_err());
    }

    #[test]
    fn random_is_one_hot() {
        let rv = random_scores(&facts(7), &mut seed::rng(1, &["t"])).unwrap();
        assert_eq!(rv.scores.iter().filter(|&&s| s == 1.0).count(), 1);
        assert_eq!(rv.scores.iter().sum::<f64>(), 1.0);
    }
}
