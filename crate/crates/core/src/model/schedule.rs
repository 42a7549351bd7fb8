use crate::error::{Error, Result};
use crate::hash::{HashTable, TokenId};

/// Which positions ignore the table and always run every layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SchedulePolicy {
    /// Position 0 is the classification position read by the head.
    pub pin_first: bool,
    /// Token ids (e.g. sentinels) pinned wherever they occur.
    pub pinned_tokens: Vec<TokenId>,
}

impl Default for SchedulePolicy {
    fn default() -> Self {
        SchedulePolicy {
            pin_first: true,
            pinned_tokens: Vec::new(),
        }
    }
}

impl SchedulePolicy {
    pub fn unpinned() -> Self {
        SchedulePolicy {
            pin_first: false,
            pinned_tokens: Vec::new(),
        }
    }
}

/// Per-position exit layers (1-based) for one sequence.
///
/// A position with exit layer `e` is updated by layers `1..=e` and frozen
/// afterwards. Padding positions carry exit layer 1, never act as queries or
/// keys, and keep their embedding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExitSchedule {
    exit_layer: Vec<usize>,
    valid: Vec<bool>,
    num_layers: usize,
}

impl ExitSchedule {
    pub fn from_layers(exit_layer: Vec<usize>, num_layers: usize) -> Result<Self> {
        if let Some(bad) = exit_layer.iter().find(|&&l| l == 0 || l > num_layers) {
            return Err(Error::Config(format!(
                "exit layer {bad} outside 1..={num_layers}"
            )));
        }
        let valid = vec![true; exit_layer.len()];
        Ok(ExitSchedule {
            exit_layer,
            valid,
            num_layers,
        })
    }

    /// Every position exits at `layer`.
    pub fn uniform(len: usize, layer: usize, num_layers: usize) -> Result<Self> {
        Self::from_layers(vec![layer; len], num_layers)
    }

    /// Appends padding positions up to `len`.
    pub fn pad_to(mut self, len: usize) -> Self {
        while self.exit_layer.len() < len {
            self.exit_layer.push(1);
            self.valid.push(false);
        }
        self
    }

    pub fn len(&self) -> usize {
        self.exit_layer.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exit_layer.is_empty()
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn exit_layers(&self) -> &[usize] {
        &self.exit_layer
    }

    pub fn exit_layer(&self, pos: usize) -> usize {
        self.exit_layer[pos]
    }

    pub fn is_valid(&self, pos: usize) -> bool {
        self.valid[pos]
    }

    pub fn attn_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn num_valid(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    /// Non-padding positions, which serve as attention keys.
    pub fn key_positions(&self) -> Vec<usize> {
        (0..self.len()).filter(|&p| self.valid[p]).collect()
    }

    /// Positions updated by layer `layer` (1-based).
    pub fn active_at(&self, layer: usize) -> Vec<usize> {
        (0..self.len())
            .filter(|&p| self.valid[p] && self.exit_layer[p] >= layer)
            .collect()
    }

    /// Number of active positions in each layer `1..=L`.
    pub fn active_counts(&self) -> Vec<usize> {
        (1..=self.num_layers)
            .map(|l| self.active_at(l).len())
            .collect()
    }
}

/// Looks each token up in `table`; unknown ids run all layers.
pub fn schedule(
    tokens: &[TokenId],
    table: &HashTable,
    num_layers: usize,
    policy: &SchedulePolicy,
) -> Result<ExitSchedule> {
    if table.num_layers() != num_layers {
        return Err(Error::Config(format!(
            "hash table built for {} layers, model has {num_layers}",
            table.num_layers()
        )));
    }
    let exit_layer = tokens
        .iter()
        .enumerate()
        .map(|(pos, &t)| {
            if (pos == 0 && policy.pin_first) || policy.pinned_tokens.contains(&t) {
                num_layers
            } else {
                table.layer_or_last(t)
            }
        })
        .collect();
    ExitSchedule::from_layers(exit_layer, num_layers)
}
