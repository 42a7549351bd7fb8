use anyhow::{bail, Result};
use clap::ValueEnum;
use hashee_core::difficulty::{run_difficulty, AnnotatorKind, DifficultyConfig, LinearMConfig};

use super::{write, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LevelArg {
    Sentence,
    Token,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnnotatorArg {
    MultiExit,
    Perfect,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum, default_value_t = LevelArg::Sentence)]
    level: LevelArg,
    #[arg(long, value_enum, default_value_t = AnnotatorArg::MultiExit)]
    annotator: AnnotatorArg,
    #[arg(long, default_value_t = 4)]
    layers: usize,
    #[arg(long, default_value_t = 16)]
    d_model: usize,
    #[arg(long, default_value_t = 2)]
    heads: usize,
    #[arg(long, default_value_t = 32)]
    d_ff: usize,
    /// Minimum negative share per layer slot in the training split.
    #[arg(long, default_value_t = 0.3)]
    floor: f64,
    /// Share of annotated instances held out for scoring.
    #[arg(long, default_value_t = 0.3)]
    test_fraction: f64,
    /// One Linear-B classifier per layer instead of a shared one.
    #[arg(long)]
    per_layer: bool,
    /// Also fit and score the multinomial first-correct-layer predictor.
    #[arg(long)]
    linear_m: bool,
}

pub fn config(ctx: &Context, args: &Args) -> Result<DifficultyConfig> {
    if !(0.0..1.0).contains(&args.floor) {
        bail!("--floor {} must be in [0, 1)", args.floor);
    }
    if !(args.test_fraction > 0.0 && args.test_fraction < 1.0) {
        bail!("--test-fraction {} must be in (0, 1)", args.test_fraction);
    }
    let mut cfg = DifficultyConfig {
        level: match args.level {
            LevelArg::Sentence => hashee_core::difficulty::Level::Sentence,
            LevelArg::Token => hashee_core::difficulty::Level::Token,
        },
        annotator: match args.annotator {
            AnnotatorArg::MultiExit => AnnotatorKind::MultiExit,
            AnnotatorArg::Perfect => AnnotatorKind::Perfect,
        },
        num_layers: args.layers,
        d_model: args.d_model,
        num_heads: args.heads,
        d_ff: args.d_ff,
        test_fraction: args.test_fraction,
        linear_m: args.linear_m.then(LinearMConfig::default),
        ..DifficultyConfig::default()
    };
    cfg.oversample.floor = args.floor;
    cfg.linear_b.per_layer = args.per_layer;
    Ok(cfg.with_seed(ctx.seed))
}

pub fn run(ctx: &Context, args: &Args) -> Result<()> {
    let out = run_difficulty(&config(ctx, args)?)?;
    for w in out.oversample.warnings() {
        eprintln!("warning: {w}");
    }
    let files = [
        ("difficulty.train.tsv", out.train.to_text()),
        ("difficulty.test.tsv", out.test.to_text()),
        ("metrics.tsv", out.metrics.to_text()),
    ];
    for (name, text) in &files {
        write(&ctx.output(name)?, text)?;
    }
    println!(
        "train {} instances ({} added by oversampling), test {}",
        out.train.len(),
        out.oversample.added,
        out.test.len()
    );
    print!("{}", out.metrics.to_text());
    println!("wrote {}", ctx.out_dir.display());
    Ok(())
}
