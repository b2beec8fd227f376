//! Softmax cross-entropy loss over all entities and its exact gradient.

use ndarray::{concatenate, s, Array1, Axis};

use super::lstm::{self, add_outer, Step};
use super::network::{softmax, MemoryCell, MemoryNetwork};
use super::params::Weights;
use super::vocab::Token;
use crate::error::{Error, Result};
use crate::knowledge::{FactBody, FactSet, Query};

/// One supervised instance: a query, its retrieved facts, and the target entity.
#[derive(Clone, Debug)]
pub struct Example {
    pub query: Query,
    pub facts: FactSet,
    pub target: String,
}

struct SeqCache {
    tokens: Vec<Token>,
    fwd: Vec<Step>,
    bwd: Vec<Step>,
}

enum KeySource {
    Kb { subject: usize, relation: usize },
    Text(SeqCache),
}

impl MemoryNetwork {
    fn encode_with_cache(&self, tokens: Vec<Token>) -> Result<(Array1<f64>, SeqCache)> {
        if tokens.is_empty() {
            return Err(Error::EmptySequence);
        }
        let w = &self.weights;
        let mut fwd = Vec::with_capacity(tokens.len());
        let mut bwd = Vec::with_capacity(tokens.len());
        let hf = lstm::run(&w.encoder_fwd, tokens.iter().map(|&t| w.embedding(t)), Some(&mut fwd));
        let hb = lstm::run(&w.encoder_bwd, tokens.iter().rev().map(|&t| w.embedding(t)), Some(&mut bwd));
        Ok((concatenate![Axis(0), hf, hb], SeqCache { tokens, fwd, bwd }))
    }

    fn backprop_sequence(&self, cache: &SeqCache, d_out: &Array1<f64>, grad: &mut Weights) {
        let d = self.dim();
        let dx_f = lstm::backward(&self.weights.encoder_fwd, &cache.fwd, d_out.slice(s![..d]), &mut grad.encoder_fwd);
        let dx_b = lstm::backward(&self.weights.encoder_bwd, &cache.bwd, d_out.slice(s![d..]), &mut grad.encoder_bwd);
        for (tok, dx) in cache.tokens.iter().zip(&dx_f) {
            grad.embedding_mut(*tok).scaled_add(1.0, dx);
        }
        for (tok, dx) in cache.tokens.iter().rev().zip(&dx_b) {
            grad.embedding_mut(*tok).scaled_add(1.0, dx);
        }
    }

    /// Cross-entropy loss of `example`, with its gradient accumulated into
    /// `grad`. Also returns whether the prediction was correct.
    pub fn loss_and_gradient(&self, example: &Example, grad: &mut Weights) -> Result<(f64, bool)> {
        let d = self.dim();
        let w = &self.weights;
        let target = self
            .vocab
            .entity(&example.target)
            .ok_or_else(|| Error::UnknownEntity(example.target.clone()))?;

        let (q, q_cache) = self.encode_with_cache(self.query_tokens(&example.query))?;
        let mut cells = Vec::with_capacity(example.facts.len());
        let mut sources = Vec::with_capacity(example.facts.len());
        for fact in &example.facts {
            let s = self
                .vocab
                .entity(&fact.subject)
                .ok_or_else(|| Error::UnknownEntity(fact.subject.clone()))?;
            let cell = match &fact.body {
                FactBody::Kb { relation } => {
                    let r = self
                        .vocab
                        .relation(relation)
                        .ok_or_else(|| Error::UnknownRelation(relation.clone()))?;
                    sources.push(KeySource::Kb { subject: s, relation: r });
                    self.encode_kb_fact(fact)?
                }
                FactBody::Text { .. } => {
                    let tokens = self.vocab.fact_tokens(fact, s).expect("text fact");
                    let (key, cache) = self.encode_with_cache(tokens)?;
                    sources.push(KeySource::Text(cache));
                    let o = self
                        .vocab
                        .entity(&fact.object)
                        .ok_or_else(|| Error::UnknownEntity(fact.object.clone()))?;
                    MemoryCell {
                        fact_id: fact.id.clone(),
                        key,
                        value: w.entity.row(o).to_owned(),
                        object: o,
                    }
                }
            };
            cells.push(cell);
        }
        let refs: Vec<&MemoryCell> = cells.iter().collect();
        let readout = self.read(&q, &refs);
        let logits = self.logits_of(&readout.b);

        let probs = Array1::from(softmax(logits.as_slice().unwrap()));
        let loss = log_sum_exp(&logits) - logits[target];
        let predicted = logits
            .iter()
            .enumerate()
            .fold(0, |best, (i, &x)| if x > logits[best] { i } else { best });

        // logits = E b
        let mut d_logits = probs;
        d_logits[target] -= 1.0;
        add_outer(&mut grad.entity, &d_logits, &readout.b);
        let d_b = w.entity.t().dot(&d_logits);

        // b = W_o c_h + b_o
        add_outer(&mut grad.output, &d_b, &readout.last);
        grad.output_bias += &d_b;
        let mut d_context = w.output.t().dot(&d_b);

        let mut d_keys: Vec<Array1<f64>> = vec![Array1::zeros(2 * d); cells.len()];
        let mut d_values: Vec<Array1<f64>> = vec![Array1::zeros(d); cells.len()];
        for (t, hop) in readout.hops.iter().enumerate().rev() {
            let hop_index = t + 1;
            // c_t = W_t m_t
            add_outer(grad.hop_mut(hop_index), &d_context, &hop.mixed);
            let d_mixed = w.hop(hop_index).t().dot(&d_context);
            // m_t = c_{t-1} + W_p pad(u)
            add_outer(&mut grad.projection, &d_mixed, &hop.padded);
            let d_padded = w.projection.t().dot(&d_mixed);
            let d_u = d_padded.slice(s![..d]);
            let mut d_prev = d_mixed;

            // u = Σ a_j v_j, a = softmax(c_{t-1} · k_j)
            let d_attn: Vec<f64> = cells.iter().map(|c| c.value.dot(&d_u)).collect();
            let mean: f64 = hop.attention.iter().zip(&d_attn).map(|(a, g)| a * g).sum();
            for (j, cell) in cells.iter().enumerate() {
                let a = hop.attention[j];
                d_values[j].scaled_add(a, &d_u);
                let d_score = a * (d_attn[j] - mean);
                d_prev.scaled_add(d_score, &cell.key);
                d_keys[j].scaled_add(d_score, &hop.prev);
            }
            d_context = d_prev;
        }

        self.backprop_sequence(&q_cache, &d_context, grad);
        for ((cell, source), (dk, dv)) in cells.iter().zip(&sources).zip(d_keys.iter().zip(&d_values)) {
            grad.entity.row_mut(cell.object).scaled_add(1.0, dv);
            match source {
                KeySource::Kb { subject, relation } => {
                    grad.entity.row_mut(*subject).scaled_add(1.0, &dk.slice(s![..d]));
                    grad.relation.row_mut(*relation).scaled_add(1.0, &dk.slice(s![d..]));
                }
                KeySource::Text(cache) => self.backprop_sequence(cache, dk, grad),
            }
        }

        Ok((loss, predicted == target))
    }

    /// Loss computed on the inference path only (no caches, no gradient).
    pub fn loss(&self, example: &Example) -> Result<f64> {
        let target = self
            .vocab
            .entity(&example.target)
            .ok_or_else(|| Error::UnknownEntity(example.target.clone()))?;
        let q = self.encode_query(&example.query)?;
        let cells = self.encode_memory(&example.facts)?;
        let refs: Vec<&MemoryCell> = cells.iter().collect();
        let b = self.read(&q, &refs).b;
        let logits = self.logits_of(&b);
        Ok(log_sum_exp(&logits) - logits[target])
    }
}

fn log_sum_exp(xs: &Array1<f64>) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
