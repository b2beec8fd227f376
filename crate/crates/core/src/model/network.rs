use ndarray::{concatenate, s, Array1, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use super::lstm;
use super::params::Weights;
use super::vocab::{Token, Vocab};
use super::ModelConfig;
use crate::error::{Error, Result};
use crate::knowledge::{Fact, FactBody, FactSet, Query};

/// A fact encoded as a memory slot: a 2d key and a d value.
#[derive(Clone, Debug, PartialEq)]
pub struct MemoryCell {
    pub fact_id: String,
    pub key: Array1<f64>,
    pub value: Array1<f64>,
    /// Entity row of the value, kept for backpropagation.
    pub(crate) object: usize,
}

/// Context vectors `c_0..c_h` and the attention distribution of every hop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HopTrace {
    pub contexts: Vec<Array1<f64>>,
    pub attention: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Answer {
    pub entity: String,
    pub entity_index: usize,
    pub b: Array1<f64>,
    pub logits: Array1<f64>,
    pub trace: HopTrace,
}

/// Intermediate values of one hop.
pub(crate) struct HopState {
    pub prev: Array1<f64>,
    pub attention: Vec<f64>,
    /// Weighted value sum, zero-padded to 2d.
    pub padded: Array1<f64>,
    pub mixed: Array1<f64>,
}

pub(crate) struct Readout {
    pub hops: Vec<HopState>,
    pub last: Array1<f64>,
    pub b: Array1<f64>,
}

/// The key-value memory network: configuration, vocabulary and weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MemoryNetwork {
    pub config: ModelConfig,
    pub vocab: Vocab,
    pub weights: Weights,
}

pub(crate) fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

fn argmax_first(xs: &Array1<f64>) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

impl MemoryNetwork {
    pub fn new(config: ModelConfig, vocab: Vocab, weights: Weights) -> Self {
        MemoryNetwork { config, vocab, weights }
    }

    pub fn dim(&self) -> usize {
        self.config.embed_dim
    }

    fn entity_row(&self, id: &str) -> Result<usize> {
        self.vocab.entity(id).ok_or_else(|| Error::UnknownEntity(id.to_string()))
    }

    pub fn query_tokens(&self, query: &Query) -> Vec<Token> {
        query.tokens.iter().map(|t| self.vocab.token(t)).collect()
    }

    /// `key = [s; r]`, `value = o`.
    pub fn encode_kb_fact(&self, fact: &Fact) -> Result<MemoryCell> {
        let FactBody::Kb { relation } = &fact.body else {
            return Err(Error::Precondition(format!("fact `{}` is not a KB fact", fact.id)));
        };
        let s = self.entity_row(&fact.subject)?;
        let r = self
            .vocab
            .relation(relation)
            .ok_or_else(|| Error::UnknownRelation(relation.clone()))?;
        let o = self.entity_row(&fact.object)?;
        let w = &self.weights;
        Ok(MemoryCell {
            fact_id: fact.id.clone(),
            key: concatenate![Axis(0), w.entity.row(s), w.relation.row(r)],
            value: w.entity.row(o).to_owned(),
            object: o,
        })
    }

    pub fn encode_fact(&self, fact: &Fact) -> Result<MemoryCell> {
        match &fact.body {
            FactBody::Kb { .. } => self.encode_kb_fact(fact),
            FactBody::Text { .. } => {
                let s = self.entity_row(&fact.subject)?;
                let o = self.entity_row(&fact.object)?;
                let tokens = self.vocab.fact_tokens(fact, s).expect("text fact");
                Ok(MemoryCell {
                    fact_id: fact.id.clone(),
                    key: self.encode_sequence(&tokens)?,
                    value: self.weights.entity.row(o).to_owned(),
                    object: o,
                })
            }
        }
    }

    pub fn encode_memory(&self, facts: &FactSet) -> Result<Vec<MemoryCell>> {
        facts.iter().map(|f| self.encode_fact(f)).collect()
    }

    /// Final forward and backward hidden states, concatenated.
    pub fn encode_sequence(&self, tokens: &[Token]) -> Result<Array1<f64>> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        let w = &self.weights;
        let fwd = lstm::run(&w.encoder_fwd, tokens.iter().map(|&t| w.embedding(t)), None);
        let bwd = lstm::run(&w.encoder_bwd, tokens.iter().rev().map(|&t| w.embedding(t)), None);
        Ok(concatenate![Axis(0), fwd, bwd])
    }

    pub fn encode_query(&self, query: &Query) -> Result<Array1<f64>> {
        self.encode_sequence(&self.query_tokens(query))
    }

    /// One attention read over non-empty memory at hop `hop_index` (1-based).
    pub fn attend_hop(&self, context: &Array1<f64>, cells: &[MemoryCell], hop_index: usize) -> Result<(Array1<f64>, Vec<f64>)> {
        if hop_index == 0 || hop_index > self.config.hops {
            return Err(Error::HopOutOfRange {
                hop: hop_index,
                hops: self.config.hops,
            });
        }
        if cells.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let refs: Vec<&MemoryCell> = cells.iter().collect();
        let state = self.hop(context.view(), &refs, hop_index);
        let next = self.weights.hop(hop_index).dot(&state.mixed);
        Ok((next, state.attention))
    }

    /// `softmax(c·k)`, the value sum padded to 2d, and `c + W_p · pad(Σ a v)`.
    /// Empty memory reads a zero value sum.
    pub(crate) fn hop(&self, context: ArrayView1<f64>, cells: &[&MemoryCell], _hop_index: usize) -> HopState {
        let d = self.dim();
        let scores: Vec<f64> = cells.iter().map(|c| context.dot(&c.key)).collect();
        let attention = softmax(&scores);
        let mut padded = Array1::<f64>::zeros(2 * d);
        {
            let mut head = padded.slice_mut(s![..d]);
            for (a, cell) in attention.iter().zip(cells) {
                head.scaled_add(*a, &cell.value);
            }
        }
        let mixed = &context + &self.weights.projection.dot(&padded);
        HopState {
            prev: context.to_owned(),
            attention,
            padded,
            mixed,
        }
    }

    pub(crate) fn read(&self, query: &Array1<f64>, cells: &[&MemoryCell]) -> Readout {
        let mut context = query.clone();
        let mut hops = Vec::with_capacity(self.config.hops);
        for t in 1..=self.config.hops {
            let state = self.hop(context.view(), cells, t);
            context = self.weights.hop(t).dot(&state.mixed);
            hops.push(state);
        }
        let b = self.weights.output.dot(&context) + &self.weights.output_bias;
        Readout { hops, last: context, b }
    }

    pub(crate) fn logits_of(&self, b: &Array1<f64>) -> Array1<f64> {
        self.weights.entity.dot(b)
    }

    /// Predicted entity (ties go to the smallest id), `b`, all entity
    /// logits and the hop trace.
    pub fn answer(&self, query: &Query, facts: &FactSet) -> Result<Answer> {
        if facts.is_empty() {
            return Err(Error::EmptyMemory);
        }
        let q = self.encode_query(query)?;
        let cells = self.encode_memory(facts)?;
        Ok(self.answer_from_cells(&q, &cells.iter().collect::<Vec<_>>()))
    }

    pub(crate) fn answer_from_cells(&self, q: &Array1<f64>, cells: &[&MemoryCell]) -> Answer {
        let readout = self.read(q, cells);
        let logits = self.logits_of(&readout.b);
        let best = argmax_first(&logits);
        let mut contexts: Vec<Array1<f64>> = readout.hops.iter().map(|h| h.prev.clone()).collect();
        contexts.push(readout.last);
        Answer {
            entity: self.vocab.entities()[best].clone(),
            entity_index: best,
            b: readout.b,
            logits,
            trace: HopTrace {
                contexts,
                attention: readout.hops.into_iter().map(|h| h.attention).collect(),
            },
        }
    }

    /// `(E·b)_e` for the given fact set; defined for an empty set as the
    /// zero-memory path.
    pub fn logit(&self, query: &Query, facts: &FactSet, entity: &str) -> Result<f64> {
        let e = self.entity_row(entity)?;
        let q = self.encode_query(query)?;
        let cells = self.encode_memory(facts)?;
        let refs: Vec<&MemoryCell> = cells.iter().collect();
        Ok(self.logit_from_cells(&q, &refs, e))
    }

    pub(crate) fn logit_from_cells(&self, q: &Array1<f64>, cells: &[&MemoryCell], entity: usize) -> f64 {
        let readout = self.read(q, cells);
        self.weights.entity.row(entity).dot(&readout.b)
    }

    /// Pre-encode the query and memory once so subsets can be scored cheaply.
    pub fn bind(&self, query: &Query, facts: &FactSet, entity: &str) -> Result<BoundQuery<'_>> {
        Ok(BoundQuery {
            network: self,
            query: self.encode_query(query)?,
            cells: self.encode_memory(facts)?,
            entity: self.entity_row(entity)?,
        })
    }
}

/// A query with its memory already encoded, scoring one target entity.
pub struct BoundQuery<'a> {
    network: &'a MemoryNetwork,
    query: Array1<f64>,
    cells: Vec<MemoryCell>,
    entity: usize,
}

impl BoundQuery<'_> {
    pub fn cells(&self) -> &[MemoryCell] {
        &self.cells
    }

    /// Logit with only the cells whose mask entry is set.
    pub fn logit_masked(&self, mask: &[bool]) -> f64 {
        let cells: Vec<&MemoryCell> = self
            .cells
            .iter()
            .zip(mask)
            .filter(|(_, &keep)| keep)
            .map(|(c, _)| c)
            .collect();
        self.network.logit_from_cells(&self.query, &cells, self.entity)
    }
}
