//! Model-defined instance difficulty: per-layer correctness labels from a
//! multi-exit annotator, and predictors of those labels.
//!
//! Slot `l` (0-based) of an instance's bit vector is 1 when the internal
//! classifier of layer `l + 1` predicts the gold class.

mod annotate;
mod metrics;
mod oversample;
mod pipeline;
mod predict;

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

pub use annotate::{annotate, annotate_tokens, Annotator, MultiExitAnnotator, PerfectAnnotator};
pub use metrics::{evaluate, evaluate_predictions, parse_metrics, MetricsTable, NegClassMetrics};
pub use oversample::{oversample, OversampleConfig, OversampleReport};
pub use pipeline::{run_difficulty, AnnotatorKind, DifficultyConfig, DifficultyOutputs, Level};
pub use predict::{
    majority_baseline, DifficultyPredictor, LinearB, LinearBConfig, LinearBGradients, LinearM,
    LinearMConfig, MajorityBaseline,
};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyInstance {
    pub id: String,
    pub tokens: Vec<String>,
    pub bits: Vec<bool>,
    /// Hidden state of the annotated position after each layer.
    pub states: Option<Vec<Vec<f64>>>,
    /// Mean token embedding of the sequence.
    pub pooled: Option<Vec<f64>>,
}

impl DifficultyInstance {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, bits: Vec<bool>) -> Self {
        DifficultyInstance {
            id: id.into(),
            tokens,
            bits,
            states: None,
            pooled: None,
        }
    }

    /// 1-based layer of the first correct internal classifier, or `L + 1`.
    pub fn first_correct_layer(&self) -> usize {
        self.bits.iter().position(|&b| b).unwrap_or(self.bits.len()) + 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DifficultyDataset {
    num_slots: usize,
    instances: Vec<DifficultyInstance>,
}

impl DifficultyDataset {
    pub fn new(num_slots: usize, instances: Vec<DifficultyInstance>) -> Result<Self> {
        for inst in &instances {
            if inst.bits.len() != num_slots {
                return Err(Error::Shape(format!(
                    "instance {} has {} label bits, expected {num_slots}",
                    inst.id,
                    inst.bits.len()
                )));
            }
            if inst.states.as_ref().is_some_and(|s| s.len() != num_slots) {
                return Err(Error::Shape(format!(
                    "instance {} lacks per-layer states",
                    inst.id
                )));
            }
            if inst.id.is_empty() || inst.id.contains(['\t', '\n']) {
                return Err(Error::Input(format!("invalid instance id {:?}", inst.id)));
            }
        }
        Ok(DifficultyDataset {
            num_slots,
            instances,
        })
    }

    pub fn num_slots(&self) -> usize {
        self.num_slots
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instances(&self) -> &[DifficultyInstance] {
        &self.instances
    }

    pub fn into_instances(self) -> Vec<DifficultyInstance> {
        self.instances
    }

    pub fn has_states(&self) -> bool {
        !self.instances.is_empty() && self.instances.iter().all(|i| i.states.is_some())
    }

    /// Number of 0 bits in each slot.
    pub fn negative_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_slots];
        for inst in &self.instances {
            for (c, &b) in counts.iter_mut().zip(&inst.bits) {
                *c += usize::from(!b);
            }
        }
        counts
    }

    /// Splits off the instances at `indices` (in that order) from the rest.
    pub fn partition(&self, indices: &[usize]) -> Result<(DifficultyDataset, DifficultyDataset)> {
        let mut picked = vec![false; self.len()];
        for &i in indices {
            if i >= self.len() || picked[i] {
                return Err(Error::Input(format!("bad or repeated split index {i}")));
            }
            picked[i] = true;
        }
        let chosen = indices.iter().map(|&i| self.instances[i].clone()).collect();
        let rest = self
            .instances
            .iter()
            .zip(&picked)
            .filter(|(_, &p)| !p)
            .map(|(inst, _)| inst.clone())
            .collect();
        Ok((
            DifficultyDataset::new(self.num_slots, chosen)?,
            DifficultyDataset::new(self.num_slots, rest)?,
        ))
    }

    /// `<id>\t<bits>\t<tokens>` per instance; features are not written.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for inst in &self.instances {
            let bits: String = inst
                .bits
                .iter()
                .map(|&b| if b { '1' } else { '0' })
                .collect();
            let _ = writeln!(out, "{}\t{}\t{}", inst.id, bits, inst.tokens.join(" "));
        }
        out
    }
}

pub fn parse_dataset(text: &str) -> Result<DifficultyDataset> {
    let mut instances = Vec::new();
    let mut num_slots = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        if line.is_empty() {
            continue;
        }
        let mut parts = line.splitn(3, '\t');
        let (Some(id), Some(bits), Some(tokens)) = (parts.next(), parts.next(), parts.next())
        else {
            return Err(Error::parse(lineno, "expected <id>\\t<bits>\\t<tokens>"));
        };
        let bits = bits
            .chars()
            .map(|c| match c {
                '1' => Ok(true),
                '0' => Ok(false),
                other => Err(Error::parse(lineno, format!("bad label bit {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        match num_slots {
            None => num_slots = Some(bits.len()),
            Some(n) if n != bits.len() => {
                return Err(Error::parse(
                    lineno,
                    format!("{} label bits, expected {n}", bits.len()),
                ));
            }
            _ => {}
        }
        if id.is_empty() {
            return Err(Error::parse(lineno, "empty instance id"));
        }
        let tokens = tokens.split_whitespace().map(str::to_string).collect();
        instances.push(DifficultyInstance::new(id, tokens, bits));
    }
    DifficultyDataset::new(num_slots.unwrap_or(0), instances)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DifficultyDataset> {
    parse_dataset(&fs::read_to_string(path)?)
}

pub fn write_dataset(path: impl AsRef<Path>, dataset: &DifficultyDataset) -> Result<()> {
    fs::write(path, dataset.to_text())?;
    Ok(())
}
