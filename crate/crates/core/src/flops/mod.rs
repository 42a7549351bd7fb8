//! Multiply-accumulate accounting for exit-aware encoder layers.
//!
//! With `n` non-padding positions of which `m` are still active, one layer
//! saves, relative to the same layer with `m = n`:
//!
//! | sublayer        | saved MACs          |
//! |-----------------|---------------------|
//! | query proj.     | `(n-m) d^2`         |
//! | attention       | `2 n (n-m) (h + d)` |
//! | output proj.    | `(n-m) d^2`         |
//! | layer norms     | `2 (n-m) d` each    |
//! | feed-forward    | `2 (n-m) d d_ff`    |
//!
//! Key and value projections still run over all `n` rows while at least one
//! row is active. A layer with `m = 0` is skipped outright, so it saves its
//! full cost. FLOPs are twice the MACs. Embedding lookup and classifier
//! heads are not counted.

pub mod oracle;
mod report;

pub use report::{report, BaselineSpec, FlopsReport, LayerTotals};

use std::ops::Add;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelDims {
    pub d_model: usize,
    pub num_heads: usize,
    pub d_ff: usize,
}

impl ModelDims {
    pub fn new(d_model: usize, num_heads: usize, d_ff: usize) -> Self {
        ModelDims {
            d_model,
            num_heads,
            d_ff,
        }
    }

    /// BERT-base sized layer.
    pub fn bert_base() -> Self {
        ModelDims::new(768, 12, 3072)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.num_heads == 0 || self.d_ff == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive: {self:?}"
            )));
        }
        if !self.d_model.is_multiple_of(self.num_heads) {
            return Err(Error::Config(format!(
                "{} heads do not divide hidden size {}",
                self.num_heads, self.d_model
            )));
        }
        Ok(())
    }
}

/// Saved MACs by sublayer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SavedMacs {
    pub linear_proj: u64,
    pub attn: u64,
    pub out_proj: u64,
    /// Both layer norms together.
    pub layer_norms: u64,
    pub ffn: u64,
}

impl SavedMacs {
    pub fn total(&self) -> u64 {
        self.linear_proj + self.attn + self.out_proj + self.layer_norms + self.ffn
    }
}

impl Add for SavedMacs {
    type Output = SavedMacs;

    fn add(self, o: SavedMacs) -> SavedMacs {
        SavedMacs {
            linear_proj: self.linear_proj + o.linear_proj,
            attn: self.attn + o.attn,
            out_proj: self.out_proj + o.out_proj,
            layer_norms: self.layer_norms + o.layer_norms,
            ffn: self.ffn + o.ffn,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerCost {
    pub n: usize,
    pub m: usize,
    pub dims: ModelDims,
    pub saved: SavedMacs,
    /// MACs of the same layer with every position active.
    pub full_macs: u64,
}

impl LayerCost {
    pub fn saved_macs(&self) -> u64 {
        self.saved.total()
    }

    /// MACs actually spent by the exit-aware layer.
    pub fn spent_macs(&self) -> u64 {
        self.full_macs - self.saved.total()
    }
}

/// MACs of one encoder layer over `n` positions with no early exit.
pub fn full_layer_macs(n: usize, dims: &ModelDims) -> u64 {
    let (n, d, h, ff) = (
        n as u64,
        dims.d_model as u64,
        dims.num_heads as u64,
        dims.d_ff as u64,
    );
    3 * n * d * d + 2 * n * n * (h + d) + n * d * d + 4 * n * d + 2 * n * d * ff
}

pub fn saved_macs(n: usize, m: usize, dims: &ModelDims) -> Result<LayerCost> {
    dims.validate()?;
    if m > n {
        return Err(Error::Input(format!("{m} active positions out of {n}")));
    }
    let full_macs = full_layer_macs(n, dims);
    let (nn, d, h, ff) = (
        n as u64,
        dims.d_model as u64,
        dims.num_heads as u64,
        dims.d_ff as u64,
    );
    let gone = (n - m) as u64;
    let mut saved = SavedMacs {
        linear_proj: gone * d * d,
        attn: 2 * nn * gone * (h + d),
        out_proj: gone * d * d,
        layer_norms: 2 * (2 * gone * d),
        ffn: 2 * gone * d * ff,
    };
    if m == 0 && n > 0 {
        // Skipped layer: keys and values are not projected either.
        saved.linear_proj += 2 * nn * d * d;
    }
    Ok(LayerCost {
        n,
        m,
        dims: *dims,
        saved,
        full_macs,
    })
}

pub fn macs_to_flops(macs: u64) -> u64 {
    2 * macs
}
