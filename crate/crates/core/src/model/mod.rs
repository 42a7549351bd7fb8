//! Exit-aware post-norm transformer encoder.

mod forward;
mod io;
mod schedule;
mod train;

pub use forward::{
    attention_probabilities, classify, forward, forward_batch, forward_layer, vanilla_forward,
    ForwardTrace,
};
pub use io::{load_model, parse_model, write_model};
pub use schedule::{schedule, ExitSchedule, SchedulePolicy};
pub use train::{
    accuracy, dataset_loss, extract_features, fit_head, loss_and_gradients, train_toy,
    HeadFitConfig, LabeledSequence, Phase, PhaseTables, ScheduleSource, TopFfnGradients, TopInput,
    ToyGradients, TrainConfig, TrainScope,
};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::hash::TokenId;
use crate::numeric::Matrix;

/// Encoder dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncoderConfig {
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_len: usize,
}

impl EncoderConfig {
    pub fn new(
        num_layers: usize,
        d_model: usize,
        num_heads: usize,
        d_ff: usize,
        vocab_size: usize,
    ) -> Self {
        EncoderConfig {
            num_layers,
            d_model,
            num_heads,
            d_ff,
            vocab_size,
            max_len: 512,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.num_heads
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_layers == 0 || self.d_model == 0 || self.num_heads == 0 || self.d_ff == 0 {
            return Err(Error::Config(format!(
                "encoder dimensions must be positive: {self:?}"
            )));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "hidden size {} is not divisible by {} heads",
                self.d_model, self.num_heads
            )));
        }
        if self.vocab_size == 0 {
            return Err(Error::Config("vocabulary size must be positive".into()));
        }
        Ok(())
    }
}

/// Weights of one encoder layer. Projections carry no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub wq: Matrix,
    pub wk: Matrix,
    pub wv: Matrix,
    pub wo: Matrix,
    pub w1: Matrix,
    pub w2: Matrix,
    pub ln1_gain: Vec<f64>,
    pub ln1_bias: Vec<f64>,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
}

impl LayerWeights {
    fn check(&self, d: usize, d_ff: usize) -> Result<()> {
        let square = [
            ("wq", &self.wq),
            ("wk", &self.wk),
            ("wv", &self.wv),
            ("wo", &self.wo),
        ];
        for (name, m) in square {
            if m.shape() != (d, d) {
                return Err(Error::Shape(format!(
                    "{name} is {:?}, expected ({d}, {d})",
                    m.shape()
                )));
            }
        }
        if self.w1.shape() != (d, d_ff) || self.w2.shape() != (d_ff, d) {
            return Err(Error::Shape(format!(
                "feed-forward weights {:?}/{:?} do not match d={d} d_ff={d_ff}",
                self.w1.shape(),
                self.w2.shape()
            )));
        }
        for v in [
            &self.ln1_gain,
            &self.ln1_bias,
            &self.ln2_gain,
            &self.ln2_bias,
        ] {
            if v.len() != d {
                return Err(Error::Shape(format!(
                    "layer-norm vector of length {}, expected {d}",
                    v.len()
                )));
            }
        }
        Ok(())
    }
}

/// Linear classifier `scores = state · weight + bias`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierHead {
    /// `d × num_classes`.
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl ClassifierHead {
    pub fn zeros(d: usize, num_classes: usize) -> Self {
        ClassifierHead {
            weight: Matrix::zeros(d, num_classes),
            bias: vec![0.0; num_classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn scores(&self, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.weight.rows() {
            return Err(Error::Shape(format!(
                "state of length {} into a head expecting {}",
                state.len(),
                self.weight.rows()
            )));
        }
        let mut out = self.bias.clone();
        for (i, &s) in state.iter().enumerate() {
            for (o, w) in out.iter_mut().zip(self.weight.row(i)) {
                *o += s * w;
            }
        }
        Ok(out)
    }

    pub fn predict(&self, state: &[f64]) -> Result<usize> {
        Ok(argmax(&self.scores(state)?))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderModel {
    pub config: EncoderConfig,
    /// `vocab_size × d_model`.
    pub embedding: Matrix,
    pub layers: Vec<LayerWeights>,
    pub head: Option<ClassifierHead>,
}

fn normal_matrix(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Matrix {
    let dist = Normal::new(0.0, std).expect("positive std");
    let data = (0..rows * cols).map(|_| dist.sample(rng)).collect();
    Matrix::from_vec(rows, cols, data).expect("sized")
}

impl EncoderModel {
    /// Gaussian initialisation: unit-variance embeddings, `1/sqrt(fan_in)`
    /// projections, identity layer norms.
    pub fn random(config: EncoderConfig, num_classes: Option<usize>, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.d_model;
        let ff = config.d_ff;
        let embedding = normal_matrix(config.vocab_size, d, 1.0, &mut rng);
        let sd = 1.0 / (d as f64).sqrt();
        let sff = 1.0 / (ff as f64).sqrt();
        let layers = (0..config.num_layers)
            .map(|_| LayerWeights {
                wq: normal_matrix(d, d, sd, &mut rng),
                wk: normal_matrix(d, d, sd, &mut rng),
                wv: normal_matrix(d, d, sd, &mut rng),
                wo: normal_matrix(d, d, sd, &mut rng),
                w1: normal_matrix(d, ff, sd, &mut rng),
                w2: normal_matrix(ff, d, sff, &mut rng),
                ln1_gain: vec![1.0; d],
                ln1_bias: vec![0.0; d],
                ln2_gain: vec![1.0; d],
                ln2_bias: vec![0.0; d],
            })
            .collect();
        let head = num_classes.map(|c| ClassifierHead {
            weight: normal_matrix(d, c, 0.01, &mut rng),
            bias: vec![0.0; c],
        });
        Ok(EncoderModel {
            config,
            embedding,
            layers,
            head,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        c.validate()?;
        if self.embedding.shape() != (c.vocab_size, c.d_model) {
            return Err(Error::Shape(format!(
                "embedding is {:?}, expected ({}, {})",
                self.embedding.shape(),
                c.vocab_size,
                c.d_model
            )));
        }
        if self.layers.len() != c.num_layers {
            return Err(Error::Shape(format!(
                "{} layers, expected {}",
                self.layers.len(),
                c.num_layers
            )));
        }
        for l in &self.layers {
            l.check(c.d_model, c.d_ff)?;
        }
        if let Some(h) = &self.head {
            if h.weight.rows() != c.d_model || h.weight.cols() != h.bias.len() {
                return Err(Error::Shape(
                    "classifier head does not match the hidden size".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.config.num_layers
    }

    /// Token embeddings plus fixed sinusoidal positions.
    pub fn embed(&self, tokens: &[TokenId]) -> Result<Matrix> {
        if tokens.is_empty() {
            return Err(Error::Input("empty token sequence".into()));
        }
        if tokens.len() > self.config.max_len {
            return Err(Error::Input(format!(
                "sequence of {} tokens exceeds the maximum length {}",
                tokens.len(),
                self.config.max_len
            )));
        }
        let d = self.config.d_model;
        let mut h = Matrix::zeros(tokens.len(), d);
        for (pos, &t) in tokens.iter().enumerate() {
            if t as usize >= self.config.vocab_size {
                return Err(Error::Input(format!(
                    "token id {t} outside the embedding table of {} rows",
                    self.config.vocab_size
                )));
            }
            let row = h.row_mut(pos);
            row.copy_from_slice(self.embedding.row(t as usize));
            add_position(row, pos);
        }
        Ok(h)
    }

    /// Mean of the token embeddings, without positions.
    pub fn pooled_embedding(&self, tokens: &[TokenId]) -> Result<Vec<f64>> {
        let d = self.config.d_model;
        let mut out = vec![0.0; d];
        let mut n = 0usize;
        for &t in tokens {
            if (t as usize) < self.config.vocab_size {
                for (o, e) in out.iter_mut().zip(self.embedding.row(t as usize)) {
                    *o += e;
                }
                n += 1;
            }
        }
        if n > 0 {
            out.iter_mut().for_each(|v| *v /= n as f64);
        }
        Ok(out)
    }
}

fn add_position(row: &mut [f64], pos: usize) {
    let d = row.len() as f64;
    for (i, v) in row.iter_mut().enumerate() {
        let pair = (i / 2 * 2) as f64;
        let angle = pos as f64 / 10000f64.powf(pair / d);
        *v += if i % 2 == 0 { angle.sin() } else { angle.cos() };
    }
}

pub(crate) fn cross_entropy(scores: &[f64], label: usize) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + scores.iter().map(|s| (s - max).exp()).sum::<f64>().ln();
    lse - scores[label]
}
