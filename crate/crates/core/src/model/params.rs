use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use super::vocab::Token;
use super::{HopSharing, ModelConfig};

/// Weights of one direction of the gated recurrent encoder. Gate rows are
/// stacked in the order input, forget, output, candidate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmWeights {
    pub input: Array2<f64>,
    pub recurrent: Array2<f64>,
    pub bias: Array1<f64>,
}

impl LstmWeights {
    fn zeros(d: usize) -> Self {
        LstmWeights {
            input: Array2::zeros((4 * d, d)),
            recurrent: Array2::zeros((4 * d, d)),
            bias: Array1::zeros(4 * d),
        }
    }
}

/// Every trainable tensor of the model. Gradients use the same layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub entity: Array2<f64>,
    pub relation: Array2<f64>,
    pub word: Array2<f64>,
    pub encoder_fwd: LstmWeights,
    pub encoder_bwd: LstmWeights,
    /// One matrix per hop, or a single shared one.
    pub hops: Vec<Array2<f64>>,
    pub projection: Array2<f64>,
    pub output: Array2<f64>,
    pub output_bias: Array1<f64>,
}

impl Weights {
    pub fn zeros(cfg: &ModelConfig, entities: usize, relations: usize, words: usize) -> Self {
        let d = cfg.embed_dim;
        let hop_count = match cfg.hop_sharing {
            HopSharing::PerHop => cfg.hops,
            HopSharing::Shared => 1,
        };
        Weights {
            entity: Array2::zeros((entities, d)),
            relation: Array2::zeros((relations, d)),
            word: Array2::zeros((words, d)),
            encoder_fwd: LstmWeights::zeros(d),
            encoder_bwd: LstmWeights::zeros(d),
            hops: vec![Array2::zeros((2 * d, 2 * d)); hop_count],
            projection: Array2::zeros((2 * d, 2 * d)),
            output: Array2::zeros((d, 2 * d)),
            output_bias: Array1::zeros(d),
        }
    }

    /// Embeddings ~ N(0, σ²) with σ from the config; encoder and output layer
    /// ~ U[-0.1, 0.1]. Hop and projection matrices, and the left block of the
    /// output layer, start at the identity plus that noise, so an untrained
    /// network already passes the read value through to `b`.
    pub fn init(cfg: &ModelConfig, entities: usize, relations: usize, words: usize, rng: &mut impl Rng) -> Self {
        let mut w = Weights::zeros(cfg, entities, relations, words);
        let normal = Normal::new(0.0, cfg.embedding_sigma).expect("validated sigma");
        let uniform = Uniform::new_inclusive(-0.1, 0.1).expect("valid range");
        for table in [&mut w.entity, &mut w.relation, &mut w.word] {
            table.mapv_inplace(|_| normal.sample(rng));
        }
        for lstm in [&mut w.encoder_fwd, &mut w.encoder_bwd] {
            lstm.input.mapv_inplace(|_| uniform.sample(rng));
            lstm.recurrent.mapv_inplace(|_| uniform.sample(rng));
            lstm.bias.mapv_inplace(|_| uniform.sample(rng));
        }
        for m in w.hops.iter_mut().chain([&mut w.projection]) {
            m.mapv_inplace(|_| uniform.sample(rng));
            m.diag_mut().mapv_inplace(|x| x + 1.0);
        }
        w.output.mapv_inplace(|_| uniform.sample(rng));
        w.output.diag_mut().mapv_inplace(|x| x + 1.0);
        w.output_bias.mapv_inplace(|_| uniform.sample(rng));
        w
    }

    pub fn hop(&self, hop_index: usize) -> &Array2<f64> {
        if self.hops.len() == 1 {
            &self.hops[0]
        } else {
            &self.hops[hop_index - 1]
        }
    }

    pub(crate) fn hop_mut(&mut self, hop_index: usize) -> &mut Array2<f64> {
        if self.hops.len() == 1 {
            &mut self.hops[0]
        } else {
            &mut self.hops[hop_index - 1]
        }
    }

    pub(crate) fn embedding(&self, token: Token) -> ndarray::ArrayView1<'_, f64> {
        match token {
            Token::Entity(i) => self.entity.row(i),
            Token::Word(i) => self.word.row(i),
        }
    }

    pub(crate) fn embedding_mut(&mut self, token: Token) -> ndarray::ArrayViewMut1<'_, f64> {
        match token {
            Token::Entity(i) => self.entity.row_mut(i),
            Token::Word(i) => self.word.row_mut(i),
        }
    }

    /// Named parameter groups as flat slices, in a fixed order.
    pub fn groups(&self) -> Vec<(String, &[f64])> {
        let mut out: Vec<(String, &[f64])> = vec![
            ("entity".into(), flat(&self.entity)),
            ("relation".into(), flat(&self.relation)),
            ("word".into(), flat(&self.word)),
        ];
        for (dir, lstm) in [("fwd", &self.encoder_fwd), ("bwd", &self.encoder_bwd)] {
            out.push((format!("encoder.{dir}.input"), flat(&lstm.input)));
            out.push((format!("encoder.{dir}.recurrent"), flat(&lstm.recurrent)));
            out.push((format!("encoder.{dir}.bias"), lstm.bias.as_slice().unwrap()));
        }
        for (t, m) in self.hops.iter().enumerate() {
            out.push((format!("hop.{}", t + 1), flat(m)));
        }
        out.push(("projection".into(), flat(&self.projection)));
        out.push(("output.weight".into(), flat(&self.output)));
        out.push(("output.bias".into(), self.output_bias.as_slice().unwrap()));
        out
    }

    pub fn groups_mut(&mut self) -> Vec<(String, &mut [f64])> {
        let mut out: Vec<(String, &mut [f64])> = vec![
            ("entity".into(), flat_mut(&mut self.entity)),
            ("relation".into(), flat_mut(&mut self.relation)),
            ("word".into(), flat_mut(&mut self.word)),
        ];
        for (dir, lstm) in [("fwd", &mut self.encoder_fwd), ("bwd", &mut self.encoder_bwd)] {
            out.push((format!("encoder.{dir}.input"), flat_mut(&mut lstm.input)));
            out.push((format!("encoder.{dir}.recurrent"), flat_mut(&mut lstm.recurrent)));
            out.push((format!("encoder.{dir}.bias"), lstm.bias.as_slice_mut().unwrap()));
        }
        for (t, m) in self.hops.iter_mut().enumerate() {
            out.push((format!("hop.{}", t + 1), flat_mut(m)));
        }
        out.push(("projection".into(), flat_mut(&mut self.projection)));
        out.push(("output.weight".into(), flat_mut(&mut self.output)));
        out.push(("output.bias".into(), self.output_bias.as_slice_mut().unwrap()));
        out
    }

    pub fn norm(&self) -> f64 {
        self.groups()
            .iter()
            .flat_map(|(_, xs)| xs.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.groups().iter().all(|(_, xs)| xs.iter().all(|x| x.is_finite()))
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: f64, other: &Weights) {
        for ((_, dst), (_, src)) in self.groups_mut().into_iter().zip(other.groups()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += alpha * s;
            }
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        for (_, xs) in self.groups_mut() {
            xs.iter_mut().for_each(|x| *x *= alpha);
        }
    }

    pub fn fill_zero(&mut self) {
        for (_, xs) in self.groups_mut() {
            xs.iter_mut().for_each(|x| *x = 0.0);
        }
    }
}

fn flat(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("parameters are kept in standard layout")
}

fn flat_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("parameters are kept in standard layout")
}
