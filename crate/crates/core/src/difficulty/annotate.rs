use rayon::prelude::*;

use super::{DifficultyDataset, DifficultyInstance};
use crate::error::{Error, Result};
use crate::hash::{TokenId, Vocab};
use crate::model::{
    fit_head, forward, ClassifierHead, EncoderModel, ExitSchedule, HeadFitConfig, LabeledSequence,
};
use crate::numeric::Matrix;
use crate::synthetic::TaggedSequence;

/// Labels instances by per-layer correctness.
pub trait Annotator: Sync {
    fn model(&self) -> &EncoderModel;

    /// One bit per layer, given the annotated position's state after each layer.
    fn layer_bits(&self, layer_states: &[&[f64]], gold: usize) -> Result<Vec<bool>>;
}

/// Encoder with an internal classifier after every layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiExitAnnotator {
    pub model: EncoderModel,
    /// `heads[l]` reads the output of layer `l + 1`.
    pub heads: Vec<ClassifierHead>,
}

/// States after layers `1..=L` of a pass in which nothing exits.
fn layer_states(model: &EncoderModel, tokens: &[TokenId]) -> Result<Vec<Matrix>> {
    let l = model.num_layers();
    let schedule = ExitSchedule::uniform(tokens.len(), l, l)?;
    let mut trace = forward(model, tokens, &schedule)?;
    trace.hidden.remove(0);
    Ok(trace.hidden)
}

impl MultiExitAnnotator {
    pub fn new(model: EncoderModel, heads: Vec<ClassifierHead>) -> Result<Self> {
        if heads.len() != model.num_layers() {
            return Err(Error::Config(format!(
                "{} internal classifiers for {} layers",
                heads.len(),
                model.num_layers()
            )));
        }
        if heads
            .iter()
            .any(|h| h.weight.rows() != model.config.d_model)
        {
            return Err(Error::Shape(
                "internal classifier does not match the hidden size".into(),
            ));
        }
        Ok(MultiExitAnnotator { model, heads })
    }

    fn fit(
        model: EncoderModel,
        per_layer: Vec<Vec<Vec<f64>>>,
        labels: &[usize],
        num_classes: usize,
        cfg: &HeadFitConfig,
    ) -> Result<Self> {
        let heads = per_layer
            .iter()
            .map(|feats| fit_head(feats, labels, num_classes, cfg))
            .collect::<Result<Vec<_>>>()?;
        MultiExitAnnotator::new(model, heads)
    }

    /// Fits one head per layer on the first position's states.
    pub fn train(
        model: EncoderModel,
        data: &[LabeledSequence],
        num_classes: usize,
        cfg: &HeadFitConfig,
    ) -> Result<Self> {
        let states = data
            .par_iter()
            .map(|s| layer_states(&model, &s.tokens))
            .collect::<Result<Vec<_>>>()?;
        let per_layer = (0..model.num_layers())
            .map(|l| states.iter().map(|h| h[l].row(0).to_vec()).collect())
            .collect();
        let labels: Vec<usize> = data.iter().map(|s| s.label).collect();
        MultiExitAnnotator::fit(model, per_layer, &labels, num_classes, cfg)
    }

    /// Fits one head per layer on every position's states.
    pub fn train_tokens(
        model: EncoderModel,
        data: &[TaggedSequence],
        num_classes: usize,
        cfg: &HeadFitConfig,
    ) -> Result<Self> {
        let states = data
            .par_iter()
            .map(|s| layer_states(&model, &s.tokens))
            .collect::<Result<Vec<_>>>()?;
        let per_layer = (0..model.num_layers())
            .map(|l| {
                states
                    .iter()
                    .flat_map(|h| (0..h[l].rows()).map(move |p| h[l].row(p).to_vec()))
                    .collect()
            })
            .collect();
        let labels: Vec<usize> = data.iter().flat_map(|s| s.tags.iter().copied()).collect();
        MultiExitAnnotator::fit(model, per_layer, &labels, num_classes, cfg)
    }
}

impl Annotator for MultiExitAnnotator {
    fn model(&self) -> &EncoderModel {
        &self.model
    }

    fn layer_bits(&self, layer_states: &[&[f64]], gold: usize) -> Result<Vec<bool>> {
        if layer_states.len() != self.heads.len() {
            return Err(Error::Config(format!(
                "{} layer states for {} internal classifiers",
                layer_states.len(),
                self.heads.len()
            )));
        }
        self.heads
            .iter()
            .zip(layer_states)
            .map(|(h, s)| Ok(h.predict(s)? == gold))
            .collect()
    }
}

/// Control annotator that marks every layer correct.
#[derive(Debug, Clone, PartialEq)]
pub struct PerfectAnnotator {
    pub model: EncoderModel,
}

impl Annotator for PerfectAnnotator {
    fn model(&self) -> &EncoderModel {
        &self.model
    }

    fn layer_bits(&self, layer_states: &[&[f64]], _gold: usize) -> Result<Vec<bool>> {
        Ok(vec![true; layer_states.len()])
    }
}

fn token_strings(vocab: &Vocab, tokens: &[TokenId]) -> Result<Vec<String>> {
    tokens
        .iter()
        .map(|&t| {
            vocab
                .token(t)
                .map(str::to_string)
                .ok_or_else(|| Error::Input(format!("token id {t} is not in the vocabulary")))
        })
        .collect()
}

fn instance<A: Annotator + ?Sized>(
    annotator: &A,
    id: String,
    tokens: Vec<String>,
    states: &[Matrix],
    pos: usize,
    gold: usize,
    pooled: &[f64],
) -> Result<DifficultyInstance> {
    let rows: Vec<&[f64]> = states.iter().map(|h| h.row(pos)).collect();
    let bits = annotator.layer_bits(&rows, gold)?;
    Ok(DifficultyInstance {
        id,
        tokens,
        bits,
        states: Some(rows.iter().map(|r| r.to_vec()).collect()),
        pooled: Some(pooled.to_vec()),
    })
}

/// One instance per sequence, annotated at the first position. Instance ids
/// are sequence indices.
pub fn annotate<A: Annotator + ?Sized>(
    annotator: &A,
    data: &[LabeledSequence],
    vocab: &Vocab,
) -> Result<DifficultyDataset> {
    let model = annotator.model();
    let instances = data
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            let states = layer_states(model, &seq.tokens)?;
            let pooled = model.pooled_embedding(&seq.tokens)?;
            let tokens = token_strings(vocab, &seq.tokens)?;
            instance(
                annotator,
                i.to_string(),
                tokens,
                &states,
                0,
                seq.label,
                &pooled,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    DifficultyDataset::new(model.num_layers(), instances)
}

/// One instance per token, with id `<sequence>.<position>`. The instance's
/// tokens are the whole sequence.
pub fn annotate_tokens<A: Annotator + ?Sized>(
    annotator: &A,
    data: &[TaggedSequence],
    vocab: &Vocab,
) -> Result<DifficultyDataset> {
    let model = annotator.model();
    let per_seq = data
        .par_iter()
        .enumerate()
        .map(|(i, seq)| {
            if seq.tags.len() != seq.tokens.len() {
                return Err(Error::Shape(format!(
                    "sequence {i} has {} tags for {} tokens",
                    seq.tags.len(),
                    seq.tokens.len()
                )));
            }
            let states = layer_states(model, &seq.tokens)?;
            let tokens = token_strings(vocab, &seq.tokens)?;
            (0..seq.tokens.len())
                .map(|p| {
                    let pooled = model.pooled_embedding(&seq.tokens[p..=p])?;
                    instance(
                        annotator,
                        format!("{i}.{p}"),
                        tokens.clone(),
                        &states,
                        p,
                        seq.tags[p],
                        &pooled,
                    )
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    DifficultyDataset::new(model.num_layers(), per_seq.into_iter().flatten().collect())
}
