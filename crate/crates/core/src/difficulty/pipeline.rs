//! Toy end-to-end run: train a multi-exit annotator, label held-out data,
//! oversample, fit the predictors and score them.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    annotate, annotate_tokens, evaluate, majority_baseline, oversample, DifficultyDataset,
    DifficultyPredictor, LinearB, LinearBConfig, LinearM, LinearMConfig, MetricsTable,
    MultiExitAnnotator, OversampleConfig, OversampleReport, PerfectAnnotator,
};
use crate::error::{Error, Result};
use crate::model::{EncoderConfig, EncoderModel, HeadFitConfig};
use crate::synthetic::{separable_task, tagging_task, SeparableConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    /// One instance per sequence.
    Sentence,
    /// One instance per token of a tagging task.
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnnotatorKind {
    MultiExit,
    /// Marks every layer correct.
    Perfect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyConfig {
    pub task: SeparableConfig,
    pub level: Level,
    /// Share of tagging positions whose tag depends on the left neighbour.
    pub context_rate: f64,
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub annotator: AnnotatorKind,
    pub head_fit: HeadFitConfig,
    /// Share of annotated instances held out for scoring the predictors.
    pub test_fraction: f64,
    pub oversample: OversampleConfig,
    pub linear_b: LinearBConfig,
    pub linear_m: Option<LinearMConfig>,
    pub seed: u64,
}

impl Default for DifficultyConfig {
    fn default() -> Self {
        DifficultyConfig {
            task: SeparableConfig {
                signal: 0.15,
                num_train: 200,
                num_test: 300,
                ..SeparableConfig::default()
            },
            level: Level::Sentence,
            context_rate: 0.2,
            num_layers: 4,
            d_model: 16,
            num_heads: 2,
            d_ff: 32,
            annotator: AnnotatorKind::MultiExit,
            head_fit: HeadFitConfig::default(),
            test_fraction: 0.3,
            oversample: OversampleConfig::default(),
            linear_b: LinearBConfig::default(),
            linear_m: None,
            seed: 0,
        }
    }
}

impl DifficultyConfig {
    /// Points every seeded stage at `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.task.seed = seed;
        self.head_fit.seed = seed;
        self.oversample.seed = seed;
        self.linear_b.seed = seed;
        if let Some(m) = self.linear_m.as_mut() {
            m.seed = seed;
        }
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyOutputs {
    /// Oversampled training split.
    pub train: DifficultyDataset,
    pub test: DifficultyDataset,
    pub oversample: OversampleReport,
    pub metrics: MetricsTable,
}

pub fn run_difficulty(cfg: &DifficultyConfig) -> Result<DifficultyOutputs> {
    if !(0.0 < cfg.test_fraction && cfg.test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test fraction {} outside (0, 1)",
            cfg.test_fraction
        )));
    }
    let enc = EncoderConfig::new(
        cfg.num_layers,
        cfg.d_model,
        cfg.num_heads,
        cfg.d_ff,
        cfg.task.vocab_size,
    );
    let model = EncoderModel::random(enc, None, cfg.seed)?;
    let c = cfg.task.num_classes;

    let annotated = match cfg.level {
        Level::Sentence => {
            let task = separable_task(&cfg.task)?;
            match cfg.annotator {
                AnnotatorKind::MultiExit => {
                    let ann = MultiExitAnnotator::train(model, &task.train, c, &cfg.head_fit)?;
                    annotate(&ann, &task.test, &task.vocab)?
                }
                AnnotatorKind::Perfect => {
                    annotate(&PerfectAnnotator { model }, &task.test, &task.vocab)?
                }
            }
        }
        Level::Token => {
            let task = tagging_task(&cfg.task, cfg.context_rate)?;
            match cfg.annotator {
                AnnotatorKind::MultiExit => {
                    let ann =
                        MultiExitAnnotator::train_tokens(model, &task.train, c, &cfg.head_fit)?;
                    annotate_tokens(&ann, &task.test, &task.vocab)?
                }
                AnnotatorKind::Perfect => {
                    annotate_tokens(&PerfectAnnotator { model }, &task.test, &task.vocab)?
                }
            }
        }
    };
    if annotated.len() < 2 {
        return Err(Error::Input(
            "need at least two annotated instances to split".into(),
        ));
    }

    let mut order: Vec<usize> = (0..annotated.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
    let num_test = ((cfg.test_fraction * annotated.len() as f64).round() as usize)
        .clamp(1, annotated.len() - 1);
    let (test, train) = annotated.partition(&order[..num_test])?;
    let (train, report) = oversample(&train, &cfg.oversample)?;

    let mut metrics = MetricsTable::default();
    let majority = majority_baseline(&train)?;
    metrics.push(majority.name(), evaluate(&majority, &test)?);
    let linear_b = LinearB::train(&train, &cfg.linear_b)?;
    metrics.push(linear_b.name(), evaluate(&linear_b, &test)?);
    if let Some(m) = &cfg.linear_m {
        let linear_m = LinearM::train(&train, m)?;
        metrics.push(linear_m.name(), evaluate(&linear_m, &test)?);
    }
    Ok(DifficultyOutputs {
        train,
        test,
        oversample: report,
        metrics,
    })
}
