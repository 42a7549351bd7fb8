//! Gradient-descent fine-tuning of the classifier head, and optionally the
//! feed-forward sublayer and final layer norm of the top layer, under a
//! phase-specific exit schedule.
//!
//! Lower layers stay frozen, so each training sequence is encoded once. For a
//! classification position that is still active in the top layer, the cached
//! input is its post-attention row `a`; the trainable tail is then
//! `LN2(a + ReLU(a W1) W2)` followed by the head.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::forward::{attention_block, classify, forward, run_layers};
use super::{
    argmax, cross_entropy, ClassifierHead, EncoderModel, ExitSchedule, LayerWeights, SchedulePolicy,
};
use crate::error::{Error, Result};
use crate::hash::{HashTable, RandomTables, TokenId};
use crate::numeric::{softmax_in_place, Matrix, LAYER_NORM_EPS};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSequence {
    pub tokens: Vec<TokenId>,
    pub label: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Infer,
}

/// The table used while training and the one used at inference.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhaseTables {
    train: HashTable,
    infer: HashTable,
}

impl PhaseTables {
    pub fn consistent(table: HashTable) -> Self {
        PhaseTables {
            train: table.clone(),
            infer: table,
        }
    }

    pub fn inconsistent(train: HashTable, infer: HashTable) -> Self {
        PhaseTables { train, infer }
    }

    pub fn table(&self, phase: Phase) -> &HashTable {
        match phase {
            Phase::Train => &self.train,
            Phase::Infer => &self.infer,
        }
    }

    pub fn is_consistent(&self) -> bool {
        self.train == self.infer
    }
}

impl From<RandomTables> for PhaseTables {
    fn from(t: RandomTables) -> Self {
        match t {
            RandomTables::Consistent(t) => PhaseTables::consistent(t),
            RandomTables::Inconsistent { train, infer } => PhaseTables::inconsistent(train, infer),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScheduleSource {
    pub tables: PhaseTables,
    pub policy: SchedulePolicy,
}

impl ScheduleSource {
    pub fn new(tables: PhaseTables) -> Self {
        ScheduleSource {
            tables,
            policy: SchedulePolicy::default(),
        }
    }

    pub fn schedule(
        &self,
        tokens: &[TokenId],
        num_layers: usize,
        phase: Phase,
    ) -> Result<ExitSchedule> {
        super::schedule(tokens, self.tables.table(phase), num_layers, &self.policy)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrainScope {
    Head,
    /// Head plus `W1`, `W2` and the second layer norm of the top layer.
    HeadAndTopFfn,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
    pub scope: TrainScope,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            lr: 0.2,
            seed: 0,
            batch_size: 16,
            scope: TrainScope::HeadAndTopFfn,
        }
    }
}

/// Cached input to the trainable tail for one sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum TopInput {
    /// The classification position exited below the top layer; its final
    /// state is fixed.
    Frozen(Vec<f64>),
    /// Post-attention row entering the top layer's feed-forward sublayer.
    Active(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopFfnGradients {
    pub w1: Matrix,
    pub w2: Matrix,
    pub ln2_gain: Vec<f64>,
    pub ln2_bias: Vec<f64>,
}

/// Gradients of the mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyGradients {
    pub head_weight: Matrix,
    pub head_bias: Vec<f64>,
    pub top: Option<TopFfnGradients>,
}

pub fn extract_features(
    model: &EncoderModel,
    data: &[LabeledSequence],
    source: &ScheduleSource,
    phase: Phase,
) -> Result<Vec<TopInput>> {
    let l = model.num_layers();
    data.iter()
        .map(|seq| {
            let schedule = source.schedule(&seq.tokens, l, phase)?;
            if schedule.is_valid(0) && schedule.exit_layer(0) == l {
                let trace = run_layers(model, &seq.tokens, &schedule, l - 1)?;
                let (a, _) = attention_block(
                    trace.final_states(),
                    &schedule.key_positions(),
                    &[0],
                    &model.layers[l - 1],
                    model.config.num_heads,
                )?;
                Ok(TopInput::Active(a.row(0).to_vec()))
            } else {
                let trace = forward(model, &seq.tokens, &schedule)?;
                Ok(TopInput::Frozen(trace.final_states().row(0).to_vec()))
            }
        })
        .collect()
}

/// Intermediates of the trainable tail for one active row.
struct TailCache {
    pre: Vec<f64>,
    hidden: Vec<f64>,
    normed: Vec<f64>,
    inv_std: f64,
    out: Vec<f64>,
}

fn tail_forward(a: &[f64], w: &LayerWeights) -> TailCache {
    let d = a.len();
    let d_ff = w.w1.cols();
    let mut pre = vec![0.0; d_ff];
    for (i, &av) in a.iter().enumerate() {
        for (p, wv) in pre.iter_mut().zip(w.w1.row(i)) {
            *p += av * wv;
        }
    }
    let hidden: Vec<f64> = pre.iter().map(|&p| p.max(0.0)).collect();
    let mut u = a.to_vec();
    for (j, &hv) in hidden.iter().enumerate() {
        for (uv, wv) in u.iter_mut().zip(w.w2.row(j)) {
            *uv += hv * wv;
        }
    }
    let mean = u.iter().sum::<f64>() / d as f64;
    let var = u.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
    let inv_std = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    let normed: Vec<f64> = u.iter().map(|v| (v - mean) * inv_std).collect();
    let out = normed
        .iter()
        .zip(&w.ln2_gain)
        .zip(&w.ln2_bias)
        .map(|((x, g), b)| x * g + b)
        .collect();
    TailCache {
        pre,
        hidden,
        normed,
        inv_std,
        out,
    }
}

fn batch_loss_grad<'a>(
    head: &ClassifierHead,
    top: Option<&LayerWeights>,
    batch: impl Iterator<Item = (&'a TopInput, usize)>,
    scope: TrainScope,
) -> Result<(f64, ToyGradients)> {
    let d = head.weight.rows();
    let c = head.num_classes();
    let mut g_w = Matrix::zeros(d, c);
    let mut g_b = vec![0.0; c];
    let mut g_top = match (scope, top) {
        (TrainScope::HeadAndTopFfn, Some(top)) => Some(TopFfnGradients {
            w1: Matrix::zeros(d, top.w1.cols()),
            w2: Matrix::zeros(top.w2.rows(), d),
            ln2_gain: vec![0.0; d],
            ln2_bias: vec![0.0; d],
        }),
        _ => None,
    };
    let mut loss = 0.0;
    let mut count = 0usize;

    for (input, label) in batch {
        if label >= c {
            return Err(Error::Input(format!("label {label} with only {c} classes")));
        }
        let (state, tail) = match input {
            TopInput::Frozen(s) => (s.clone(), None),
            TopInput::Active(a) => {
                let top =
                    top.ok_or_else(|| Error::Config("active input needs the top layer".into()))?;
                let cache = tail_forward(a, top);
                (cache.out.clone(), Some((a, cache)))
            }
        };
        let scores = head.scores(&state)?;
        loss += cross_entropy(&scores, label);
        count += 1;

        let mut dz = scores;
        softmax_in_place(&mut dz);
        dz[label] -= 1.0;
        for (i, &s) in state.iter().enumerate() {
            for (g, &dzv) in g_w.row_mut(i).iter_mut().zip(&dz) {
                *g += s * dzv;
            }
        }
        for (g, &dzv) in g_b.iter_mut().zip(&dz) {
            *g += dzv;
        }

        let (Some(gt), Some(top), Some((a, cache))) = (g_top.as_mut(), top, tail) else {
            continue;
        };
        let d_ff = top.w1.cols();
        let ds: Vec<f64> = (0..d)
            .map(|i| head.weight.row(i).iter().zip(&dz).map(|(w, z)| w * z).sum())
            .collect();
        for (i, &dsv) in ds.iter().enumerate() {
            gt.ln2_gain[i] += dsv * cache.normed[i];
            gt.ln2_bias[i] += dsv;
        }
        let dxhat: Vec<f64> = ds.iter().zip(&top.ln2_gain).map(|(a, g)| a * g).collect();
        let mean_dx = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx_x = dxhat
            .iter()
            .zip(&cache.normed)
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / d as f64;
        let du: Vec<f64> = dxhat
            .iter()
            .zip(&cache.normed)
            .map(|(dx, x)| cache.inv_std * (dx - mean_dx - x * mean_dx_x))
            .collect();
        let mut dpre = vec![0.0; d_ff];
        for (j, dp) in dpre.iter_mut().enumerate() {
            let row = top.w2.row(j);
            for (g, &duv) in gt.w2.row_mut(j).iter_mut().zip(&du) {
                *g += cache.hidden[j] * duv;
            }
            if cache.pre[j] > 0.0 {
                *dp = row.iter().zip(&du).map(|(w, g)| w * g).sum();
            }
        }
        for (i, &av) in a.iter().enumerate() {
            for (g, &dp) in gt.w1.row_mut(i).iter_mut().zip(&dpre) {
                *g += av * dp;
            }
        }
    }

    if count == 0 {
        return Err(Error::Input("empty batch".into()));
    }
    let k = 1.0 / count as f64;
    g_w = g_w.scale(k);
    g_b.iter_mut().for_each(|g| *g *= k);
    if let Some(gt) = g_top.as_mut() {
        gt.w1 = gt.w1.scale(k);
        gt.w2 = gt.w2.scale(k);
        gt.ln2_gain.iter_mut().for_each(|g| *g *= k);
        gt.ln2_bias.iter_mut().for_each(|g| *g *= k);
    }
    Ok((
        loss * k,
        ToyGradients {
            head_weight: g_w,
            head_bias: g_b,
            top: g_top,
        },
    ))
}

/// Mean cross-entropy and its analytic gradient over cached features.
pub fn loss_and_gradients(
    model: &EncoderModel,
    features: &[TopInput],
    labels: &[usize],
    scope: TrainScope,
) -> Result<(f64, ToyGradients)> {
    if features.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let head = model
        .head
        .as_ref()
        .ok_or_else(|| Error::Config("training needs a classifier head".into()))?;
    batch_loss_grad(
        head,
        model.layers.last(),
        features.iter().zip(labels.iter().copied()),
        scope,
    )
}

fn sub_scaled(dst: &mut [f64], grad: &[f64], lr: f64) {
    for (d, g) in dst.iter_mut().zip(grad) {
        *d -= lr * g;
    }
}

fn apply_head(head: &mut ClassifierHead, grads: &ToyGradients, lr: f64) {
    sub_scaled(head.weight.data_mut(), grads.head_weight.data(), lr);
    sub_scaled(&mut head.bias, &grads.head_bias, lr);
}

fn apply(model: &mut EncoderModel, grads: &ToyGradients, lr: f64) {
    apply_head(
        model.head.as_mut().expect("checked before training"),
        grads,
        lr,
    );
    if let Some(gt) = &grads.top {
        let top = model.layers.last_mut().expect("at least one layer");
        sub_scaled(top.w1.data_mut(), gt.w1.data(), lr);
        sub_scaled(top.w2.data_mut(), gt.w2.data(), lr);
        sub_scaled(&mut top.ln2_gain, &gt.ln2_gain, lr);
        sub_scaled(&mut top.ln2_bias, &gt.ln2_bias, lr);
    }
}

/// Fine-tunes a copy of `model` on `data` using the `phase` table of `source`.
pub fn train_toy(
    model: &EncoderModel,
    data: &[LabeledSequence],
    source: &ScheduleSource,
    phase: Phase,
    cfg: &TrainConfig,
) -> Result<EncoderModel> {
    if data.is_empty() {
        return Err(Error::Input("training set is empty".into()));
    }
    if model.head.is_none() {
        return Err(Error::Config("training needs a classifier head".into()));
    }
    let features = extract_features(model, data, source, phase)?;
    let mut trained = model.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let batch = cfg.batch_size.max(1);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let (loss, grads) = batch_loss_grad(
                trained.head.as_ref().expect("checked above"),
                trained.layers.last(),
                chunk.iter().map(|&i| (&features[i], data[i].label)),
                cfg.scope,
            )?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
            }
            apply(&mut trained, &grads, cfg.lr);
        }
    }
    Ok(trained)
}

/// Mean cross-entropy computed end to end through `forward` and `classify`.
pub fn dataset_loss(
    model: &EncoderModel,
    data: &[LabeledSequence],
    source: &ScheduleSource,
    phase: Phase,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let mut total = 0.0;
    for seq in data {
        let schedule = source.schedule(&seq.tokens, model.num_layers(), phase)?;
        let trace = forward(model, &seq.tokens, &schedule)?;
        total += cross_entropy(&classify(model, trace.final_states())?, seq.label);
    }
    Ok(total / data.len() as f64)
}

pub fn accuracy(
    model: &EncoderModel,
    data: &[LabeledSequence],
    source: &ScheduleSource,
    phase: Phase,
) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Input("empty dataset".into()));
    }
    let mut correct = 0usize;
    for seq in data {
        let schedule = source.schedule(&seq.tokens, model.num_layers(), phase)?;
        let trace = forward(model, &seq.tokens, &schedule)?;
        if argmax(&classify(model, trace.final_states())?) == seq.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadFitConfig {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub batch_size: usize,
}

impl Default for HeadFitConfig {
    fn default() -> Self {
        HeadFitConfig {
            epochs: 60,
            lr: 0.2,
            seed: 0,
            batch_size: 16,
        }
    }
}

/// Softmax regression on fixed feature vectors.
pub fn fit_head(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    cfg: &HeadFitConfig,
) -> Result<ClassifierHead> {
    if features.is_empty() || features.len() != labels.len() {
        return Err(Error::Input(format!(
            "{} feature rows for {} labels",
            features.len(),
            labels.len()
        )));
    }
    let mut head = ClassifierHead::zeros(features[0].len(), num_classes);
    let inputs: Vec<TopInput> = features.iter().cloned().map(TopInput::Frozen).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let (loss, grads) = batch_loss_grad(
                &head,
                None,
                chunk.iter().map(|&i| (&inputs[i], labels[i])),
                TrainScope::Head,
            )?;
            if !loss.is_finite() {
                return Err(Error::Training(format!("non-finite loss in epoch {epoch}")));
            }
            apply_head(&mut head, &grads, cfg.lr);
        }
    }
    Ok(head)
}
