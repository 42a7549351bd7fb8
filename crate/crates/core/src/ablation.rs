//! Consistent versus inconsistent random hashing between training and
//! inference, on the separable toy task.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hash::build_random;
use crate::model::{
    accuracy, train_toy, EncoderConfig, EncoderModel, Phase, PhaseTables, ScheduleSource,
    TrainConfig,
};
use crate::synthetic::{separable_task, SeparableConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct AblationConfig {
    pub task: SeparableConfig,
    pub num_layers: usize,
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ff: usize,
    pub num_buckets: usize,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    /// Control: the inconsistent arm reuses the consistent tables.
    pub force_identical: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        AblationConfig {
            task: SeparableConfig::default(),
            num_layers: 4,
            d_model: 16,
            num_heads: 2,
            d_ff: 32,
            num_buckets: 4,
            train: TrainConfig::default(),
            seeds: (1..=10).collect(),
            force_identical: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Consistent,
    Inconsistent,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Consistent => "rand-cons",
            Arm::Inconsistent => "rand-incons",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub consistent: f64,
    pub inconsistent: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationSummary {
    pub per_seed: Vec<SeedResult>,
}

impl AblationSummary {
    pub fn mean(&self, arm: Arm) -> f64 {
        let sum: f64 = self
            .per_seed
            .iter()
            .map(|r| match arm {
                Arm::Consistent => r.consistent,
                Arm::Inconsistent => r.inconsistent,
            })
            .sum();
        sum / self.per_seed.len() as f64
    }

    /// `arm\tseed\taccuracy` rows: every seed, then the mean, for each arm.
    pub fn to_text(&self) -> String {
        let mut out = String::from("arm\tseed\taccuracy\n");
        for arm in [Arm::Consistent, Arm::Inconsistent] {
            for r in &self.per_seed {
                let acc = match arm {
                    Arm::Consistent => r.consistent,
                    Arm::Inconsistent => r.inconsistent,
                };
                let _ = writeln!(out, "{}\t{}\t{acc:.6}", arm.as_str(), r.seed);
            }
            let _ = writeln!(out, "{}\tmean\t{:.6}", arm.as_str(), self.mean(arm));
        }
        out
    }
}

fn run_seed(cfg: &AblationConfig, seed: u64) -> Result<SeedResult> {
    let task = separable_task(&cfg.task)?;
    let enc = EncoderConfig::new(
        cfg.num_layers,
        cfg.d_model,
        cfg.num_heads,
        cfg.d_ff,
        task.vocab.len(),
    );
    let model = EncoderModel::random(enc, Some(task.num_classes), seed)?;
    let train_cfg = TrainConfig { seed, ..cfg.train };

    let cons = PhaseTables::from(build_random(
        &task.vocab,
        cfg.num_buckets,
        cfg.num_layers,
        seed,
        true,
    )?);
    let incons = if cfg.force_identical {
        cons.clone()
    } else {
        PhaseTables::from(build_random(
            &task.vocab,
            cfg.num_buckets,
            cfg.num_layers,
            seed,
            false,
        )?)
    };
    let score = |tables: PhaseTables| -> Result<f64> {
        let source = ScheduleSource::new(tables);
        let trained = train_toy(&model, &task.train, &source, Phase::Train, &train_cfg)?;
        accuracy(&trained, &task.test, &source, Phase::Infer)
    };
    Ok(SeedResult {
        seed,
        consistent: score(cons)?,
        inconsistent: score(incons)?,
    })
}

/// Trains and scores both arms for every seed. The seed drives the encoder
/// initialisation, the tables and the batch order; the task is fixed.
pub fn ablate_consistency(cfg: &AblationConfig) -> Result<AblationSummary> {
    if cfg.seeds.len() < 2 {
        return Err(Error::Config(format!(
            "need at least 2 seeds to compare arms, got {}",
            cfg.seeds.len()
        )));
    }
    let per_seed = cfg
        .seeds
        .par_iter()
        .map(|&s| run_seed(cfg, s))
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationSummary { per_seed })
}
