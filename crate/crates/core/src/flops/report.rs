use std::fmt::Write as _;

use rayon::prelude::*;

use super::{full_layer_macs, macs_to_flops, saved_macs, ModelDims};
use crate::error::{Error, Result};
use crate::model::ExitSchedule;

/// Reference model for speedup ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BaselineSpec {
    pub num_layers: usize,
    pub dims: ModelDims,
}

impl BaselineSpec {
    pub fn bert_base() -> Self {
        BaselineSpec {
            num_layers: 12,
            dims: ModelDims::bert_base(),
        }
    }
}

/// Per-layer sums over a corpus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct LayerTotals {
    pub layer: usize,
    pub n_sum: u64,
    pub m_sum: u64,
    pub saved_macs: u64,
    pub full_macs: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlopsReport {
    pub dims: ModelDims,
    pub baseline: BaselineSpec,
    pub sequences: u64,
    pub layers: Vec<LayerTotals>,
    /// Tokens per exit layer; index `l - 1` counts exit layer `l`.
    pub exit_histogram: Vec<u64>,
    pub model_macs: u64,
    pub baseline_macs: u64,
}

impl FlopsReport {
    fn empty(dims: ModelDims, num_layers: usize, baseline: BaselineSpec) -> Self {
        FlopsReport {
            dims,
            baseline,
            sequences: 0,
            layers: (1..=num_layers)
                .map(|layer| LayerTotals {
                    layer,
                    ..LayerTotals::default()
                })
                .collect(),
            exit_histogram: vec![0; num_layers],
            model_macs: 0,
            baseline_macs: 0,
        }
    }

    fn add_sequence(&mut self, schedule: &ExitSchedule) -> Result<()> {
        let n = schedule.num_valid();
        let baseline_layer = full_layer_macs(n, &self.baseline.dims);
        self.baseline_macs += self.baseline.num_layers as u64 * baseline_layer;
        for (totals, m) in self.layers.iter_mut().zip(schedule.active_counts()) {
            let cost = saved_macs(n, m, &self.dims)?;
            totals.n_sum += n as u64;
            totals.m_sum += m as u64;
            totals.saved_macs += cost.saved_macs();
            totals.full_macs += cost.full_macs;
            self.model_macs += cost.spent_macs();
        }
        for p in 0..schedule.len() {
            if schedule.is_valid(p) {
                self.exit_histogram[schedule.exit_layer(p) - 1] += 1;
            }
        }
        self.sequences += 1;
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn model_flops(&self) -> u64 {
        macs_to_flops(self.model_macs)
    }

    pub fn baseline_flops(&self) -> u64 {
        macs_to_flops(self.baseline_macs)
    }

    /// Baseline FLOPs over model FLOPs.
    pub fn speedup(&self) -> f64 {
        self.baseline_flops() as f64 / self.model_flops() as f64
    }

    /// Combines reports over disjoint corpus shards.
    pub fn merge(mut self, other: &FlopsReport) -> Result<FlopsReport> {
        if self.dims != other.dims
            || self.baseline != other.baseline
            || self.num_layers() != other.num_layers()
        {
            return Err(Error::Config(
                "cannot merge reports with different model settings".into(),
            ));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.n_sum += b.n_sum;
            a.m_sum += b.m_sum;
            a.saved_macs += b.saved_macs;
            a.full_macs += b.full_macs;
        }
        for (a, b) in self.exit_histogram.iter_mut().zip(&other.exit_histogram) {
            *a += b;
        }
        self.sequences += other.sequences;
        self.model_macs += other.model_macs;
        self.baseline_macs += other.baseline_macs;
        Ok(self)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,n_sum,m_sum,saved_macs,full_macs\n");
        for l in &self.layers {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                l.layer, l.n_sum, l.m_sum, l.saved_macs, l.full_macs
            );
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# encoder layers only; embedding lookup and classifier head excluded; FLOPs = 2 x MACs"
        );
        let _ = writeln!(
            out,
            "# model: L={} d={} h={} d_ff={}; baseline: L={} d={} h={} d_ff={}",
            self.num_layers(),
            self.dims.d_model,
            self.dims.num_heads,
            self.dims.d_ff,
            self.baseline.num_layers,
            self.baseline.dims.d_model,
            self.baseline.dims.num_heads,
            self.baseline.dims.d_ff
        );
        let _ = writeln!(out, "sequences       {}", self.sequences);
        let _ = writeln!(
            out,
            "{:>5} {:>12} {:>12} {:>18} {:>18}",
            "layer", "n_sum", "m_sum", "saved_macs", "full_macs"
        );
        for l in &self.layers {
            let _ = writeln!(
                out,
                "{:>5} {:>12} {:>12} {:>18} {:>18}",
                l.layer, l.n_sum, l.m_sum, l.saved_macs, l.full_macs
            );
        }
        let _ = writeln!(out, "exit layer histogram:");
        for (i, c) in self.exit_histogram.iter().enumerate() {
            let _ = writeln!(out, "{:>5} {:>12}", i + 1, c);
        }
        let _ = writeln!(out, "model FLOPs     {}", self.model_flops());
        let _ = writeln!(out, "baseline FLOPs  {}", self.baseline_flops());
        let _ = writeln!(out, "speedup         {:.4}x", self.speedup());
        out
    }
}

/// Sums per-layer costs over `schedules`, sharding the corpus across threads.
pub fn report(
    dims: &ModelDims,
    num_layers: usize,
    schedules: &[ExitSchedule],
    baseline: &BaselineSpec,
) -> Result<FlopsReport> {
    dims.validate()?;
    baseline.dims.validate()?;
    if schedules.is_empty() {
        return Err(Error::Input("cannot report on an empty corpus".into()));
    }
    if let Some(s) = schedules.iter().find(|s| s.num_layers() != num_layers) {
        return Err(Error::Config(format!(
            "schedule for {} layers in a {num_layers}-layer report",
            s.num_layers()
        )));
    }
    let shards: Vec<FlopsReport> = schedules
        .par_chunks(1024)
        .map(|chunk| {
            let mut r = FlopsReport::empty(*dims, num_layers, *baseline);
            for s in chunk {
                r.add_sequence(s)?;
            }
            Ok(r)
        })
        .collect::<Result<_>>()?;
    let mut iter = shards.into_iter();
    let first = iter.next().expect("non-empty corpus");
    iter.try_fold(first, |acc, r| acc.merge(&r))
}
