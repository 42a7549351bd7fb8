use anyhow::{bail, Result};
use hashee_core::ablation::{ablate_consistency, AblationConfig, Arm};

use super::{parse_seeds, write, Context};

#[derive(Debug, clap::Args)]
pub struct Args {
    /// Seeds as an inclusive range `a..b` or a list `1,2,3`; at least two.
    #[arg(long, default_value = "1..10")]
    seeds: String,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 4)]
    buckets: usize,
    #[arg(long, default_value_t = 16)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    d_ff: usize,
    #[arg(long, default_value_t = 40)]
    epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    lr: f64,
    /// Control run: the inconsistent arm reuses the consistent table.
    #[arg(long)]
    force_identical: bool,
}

pub fn run(ctx: &Context, args: &Args) -> Result<()> {
    let seeds = parse_seeds(&args.seeds)?;
    if seeds.len() < 2 {
        bail!("--seeds needs at least two seeds, got {}", seeds.len());
    }
    if args.buckets == 0 || args.buckets > args.layers {
        bail!(
            "--buckets {} must be between 1 and --layers {}",
            args.buckets,
            args.layers
        );
    }
    if !(args.lr > 0.0 && args.lr.is_finite()) {
        bail!("--lr must be a positive number");
    }
    let mut cfg = AblationConfig {
        num_layers: args.layers,
        num_buckets: args.buckets,
        d_model: args.d_model,
        num_heads: args.heads,
        d_ff: args.d_ff,
        seeds,
        force_identical: args.force_identical,
        ..AblationConfig::default()
    };
    cfg.task.seed = ctx.seed;
    cfg.train.epochs = args.epochs;
    cfg.train.lr = args.lr;
    let summary = ablate_consistency(&cfg)?;
    let path = ctx.output("ablation.tsv")?;
    write(&path, &summary.to_text())?;
    for arm in [Arm::Consistent, Arm::Inconsistent] {
        println!(
            "{}: mean accuracy {:.4} over {} seeds",
            arm.as_str(),
            summary.mean(arm),
            summary.per_seed.len()
        );
    }
    println!("wrote {}", path.display());
    Ok(())
}
