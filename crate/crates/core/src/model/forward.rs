use rayon::prelude::*;

use super::{ClassifierHead, EncoderModel, ExitSchedule, LayerWeights};
use crate::error::{Error, Result};
use crate::hash::TokenId;
use crate::numeric::{layer_norm, matmul, relu, softmax_rows, Matrix, LAYER_NORM_EPS};

/// Hidden states after every layer of one exit-aware forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    /// `hidden[0]` is the embedding output, `hidden[l]` the output of layer `l`.
    pub hidden: Vec<Matrix>,
    /// Positions updated by each layer `1..=L` (index `l - 1`).
    pub active: Vec<Vec<usize>>,
    /// `(n, m)` per layer: non-padding length and active count.
    pub layer_sizes: Vec<(usize, usize)>,
}

impl ForwardTrace {
    pub fn final_states(&self) -> &Matrix {
        self.hidden.last().expect("trace has the embedding layer")
    }
}

/// Queries of the active rows against keys/values from `keys`, followed by
/// the output projection, residual and first layer norm. Returns one row per
/// active position, plus the per-head attention probabilities.
pub(crate) fn attention_block(
    states: &Matrix,
    keys: &[usize],
    active: &[usize],
    w: &LayerWeights,
    num_heads: usize,
) -> Result<(Matrix, Vec<Matrix>)> {
    let d = states.cols();
    if !d.is_multiple_of(num_heads) {
        return Err(Error::Shape(format!("{d} columns over {num_heads} heads")));
    }
    let dk = d / num_heads;
    let h_active = states.select_rows(active);
    let h_keys = states.select_rows(keys);
    let q = matmul(&h_active, &w.wq)?;
    let k = matmul(&h_keys, &w.wk)?;
    let v = matmul(&h_keys, &w.wv)?;
    let scale = 1.0 / (dk as f64).sqrt();

    let mut concat = Matrix::zeros(active.len(), d);
    let mut probs = Vec::with_capacity(num_heads);
    for head in 0..num_heads {
        let qh = q.col_block(head * dk, dk);
        let kh = k.col_block(head * dk, dk);
        let vh = v.col_block(head * dk, dk);
        let p = softmax_rows(&matmul(&qh, &kh.transpose())?.scale(scale));
        let xh = matmul(&p, &vh)?;
        for r in 0..active.len() {
            concat.row_mut(r)[head * dk..(head + 1) * dk].copy_from_slice(xh.row(r));
        }
        probs.push(p);
    }
    let x = matmul(&concat, &w.wo)?;
    let out = layer_norm(&h_active.add(&x)?, &w.ln1_gain, &w.ln1_bias, LAYER_NORM_EPS)?;
    Ok((out, probs))
}

/// Feed-forward sublayer with residual and second layer norm.
pub(crate) fn ffn_block(a: &Matrix, w: &LayerWeights) -> Result<Matrix> {
    let f = matmul(&relu(&matmul(a, &w.w1)?), &w.w2)?;
    layer_norm(&a.add(&f)?, &w.ln2_gain, &w.ln2_bias, LAYER_NORM_EPS)
}

/// One exit-aware encoder layer.
///
/// Only `active` rows produce queries and are updated; every row in `keys`
/// contributes keys and values from its current state. Rows outside `active`
/// are copied unchanged. With no active rows the layer is the identity.
pub fn forward_layer(
    states: &Matrix,
    keys: &[usize],
    active: &[usize],
    weights: &LayerWeights,
    num_heads: usize,
) -> Result<Matrix> {
    if weights.wq.rows() != states.cols() {
        return Err(Error::Shape(format!(
            "states have {} columns, layer expects {}",
            states.cols(),
            weights.wq.rows()
        )));
    }
    if let Some(&p) = active.iter().chain(keys).find(|&&p| p >= states.rows()) {
        return Err(Error::Shape(format!(
            "position {p} outside {} rows",
            states.rows()
        )));
    }
    if active.is_empty() {
        return Ok(states.clone());
    }
    let (a, _) = attention_block(states, keys, active, weights, num_heads)?;
    let out = ffn_block(&a, weights)?;
    let mut next = states.clone();
    for (i, &p) in active.iter().enumerate() {
        next.row_mut(p).copy_from_slice(out.row(i));
    }
    Ok(next)
}

/// Per-head attention probabilities of the active rows (rows follow
/// `active`, columns follow `keys`).
pub fn attention_probabilities(
    states: &Matrix,
    keys: &[usize],
    active: &[usize],
    weights: &LayerWeights,
    num_heads: usize,
) -> Result<Vec<Matrix>> {
    Ok(attention_block(states, keys, active, weights, num_heads)?.1)
}

pub(crate) fn check_inputs(
    model: &EncoderModel,
    tokens: &[TokenId],
    schedule: &ExitSchedule,
) -> Result<()> {
    if tokens.is_empty() {
        return Err(Error::Input("empty token sequence".into()));
    }
    if tokens.len() != schedule.len() {
        return Err(Error::Shape(format!(
            "{} tokens but a schedule for {} positions",
            tokens.len(),
            schedule.len()
        )));
    }
    if schedule.num_layers() != model.num_layers() {
        return Err(Error::Config(format!(
            "schedule for {} layers, model has {}",
            schedule.num_layers(),
            model.num_layers()
        )));
    }
    Ok(())
}

/// Runs layers `1..=upto`, recording every intermediate state.
pub(crate) fn run_layers(
    model: &EncoderModel,
    tokens: &[TokenId],
    schedule: &ExitSchedule,
    upto: usize,
) -> Result<ForwardTrace> {
    check_inputs(model, tokens, schedule)?;
    let keys = schedule.key_positions();
    let n = keys.len();
    let mut hidden = vec![model.embed(tokens)?];
    let mut active = Vec::with_capacity(upto);
    let mut layer_sizes = Vec::with_capacity(upto);
    for (l, weights) in model.layers.iter().enumerate().take(upto) {
        let act = schedule.active_at(l + 1);
        let next = forward_layer(
            hidden.last().expect("non-empty"),
            &keys,
            &act,
            weights,
            model.config.num_heads,
        )?;
        layer_sizes.push((n, act.len()));
        active.push(act);
        hidden.push(next);
    }
    Ok(ForwardTrace {
        hidden,
        active,
        layer_sizes,
    })
}

/// Exit-aware forward pass through all layers.
pub fn forward(
    model: &EncoderModel,
    tokens: &[TokenId],
    schedule: &ExitSchedule,
) -> Result<ForwardTrace> {
    run_layers(model, tokens, schedule, model.num_layers())
}

/// Independent forward passes; results keep the input order.
pub fn forward_batch(
    model: &EncoderModel,
    batch: &[(Vec<TokenId>, ExitSchedule)],
) -> Vec<Result<ForwardTrace>> {
    batch
        .par_iter()
        .map(|(tokens, schedule)| forward(model, tokens, schedule))
        .collect()
}

/// Plain encoder without any exiting, written with explicit loops. Serves as
/// the reference the exit-aware pass must reproduce when nothing exits.
pub fn vanilla_forward(model: &EncoderModel, tokens: &[TokenId]) -> Result<Matrix> {
    let cfg = model.config;
    let n = tokens.len();
    let d = cfg.d_model;
    let dk = cfg.head_dim();
    let mut h = model.embed(tokens)?;
    for w in &model.layers {
        let q = matmul(&h, &w.wq)?;
        let k = matmul(&h, &w.wk)?;
        let v = matmul(&h, &w.wv)?;
        let mut ctx = Matrix::zeros(n, d);
        for head in 0..cfg.num_heads {
            let off = head * dk;
            for i in 0..n {
                let mut scores = vec![0.0; n];
                for (j, s) in scores.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for c in 0..dk {
                        acc += q.get(i, off + c) * k.get(j, off + c);
                    }
                    *s = acc / (dk as f64).sqrt();
                }
                let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
                let total: f64 = exps.iter().sum();
                for c in 0..dk {
                    let mut acc = 0.0;
                    for (j, e) in exps.iter().enumerate() {
                        acc += e / total * v.get(j, off + c);
                    }
                    ctx.set(i, off + c, acc);
                }
            }
        }
        let a = layer_norm(
            &h.add(&matmul(&ctx, &w.wo)?)?,
            &w.ln1_gain,
            &w.ln1_bias,
            LAYER_NORM_EPS,
        )?;
        let f = matmul(&relu(&matmul(&a, &w.w1)?), &w.w2)?;
        h = layer_norm(&a.add(&f)?, &w.ln2_gain, &w.ln2_bias, LAYER_NORM_EPS)?;
    }
    Ok(h)
}

/// Class scores read from position 0 of the final states.
pub fn classify(model: &EncoderModel, final_states: &Matrix) -> Result<Vec<f64>> {
    let head: &ClassifierHead = model
        .head
        .as_ref()
        .ok_or_else(|| Error::Config("model has no classifier head".into()))?;
    if final_states.rows() == 0 {
        return Err(Error::Input("no states to classify".into()));
    }
    head.scores(final_states.row(0))
}
