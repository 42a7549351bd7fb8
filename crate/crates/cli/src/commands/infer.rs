use std::fmt::Write as _;
use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use hashee_core::flops::{report, BaselineSpec, ModelDims};
use hashee_core::model::{
    classify, forward_batch, load_model, write_model, EncoderConfig, EncoderModel,
};

use super::{policy, read_corpus, read_table, schedules, write, Context};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Saved model; a seeded random model is used when absent.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    d_model: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 128)]
    d_ff: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long)]
    unpinned: bool,
    /// Also write the model used to `<out-dir>/model.txt`.
    #[arg(long)]
    save_model: bool,
}

fn load_or_build(ctx: &Context, args: &Args, layers: usize, vocab: usize) -> Result<EncoderModel> {
    match &args.model {
        Some(path) => {
            let model = load_model(path).with_context(|| format!("--model {}", path.display()))?;
            if model.num_layers() != layers {
                bail!(
                    "--model has {} layers but --table was built for {layers}",
                    model.num_layers()
                );
            }
            if model.config.vocab_size < vocab + 1 {
                bail!(
                    "--model embeds {} ids, --table needs {} (vocabulary plus the unknown token)",
                    model.config.vocab_size,
                    vocab + 1
                );
            }
            if model.head.is_none() {
                bail!("--model has no classifier head");
            }
            Ok(model)
        }
        None => {
            if args.classes == 0 {
                bail!("--classes must be positive");
            }
            let cfg = EncoderConfig::new(layers, args.d_model, args.heads, args.d_ff, vocab + 1);
            cfg.validate()
                .context("--d-model/--heads/--d-ff describe an invalid encoder")?;
            Ok(EncoderModel::random(cfg, Some(args.classes), ctx.seed)?)
        }
    }
}

pub fn run(ctx: &Context, args: &Args) -> Result<()> {
    let table = read_table(&args.table, "--table")?;
    let corpus = read_corpus(&args.corpus, false)?;
    if corpus.is_empty() {
        bail!("--corpus {} has no documents", args.corpus.display());
    }
    let l = table.num_layers();
    let model = load_or_build(ctx, args, l, table.vocab_size())?;
    let batch = schedules(&corpus, &table, &policy(args.unpinned))?;

    let mut out = String::from("doc\tpred\texits\n");
    for (i, trace) in forward_batch(&model, &batch).into_iter().enumerate() {
        let trace = trace.with_context(|| format!("document {}", i + 1))?;
        let scores = classify(&model, trace.final_states())?;
        let pred = scores
            .iter()
            .enumerate()
            .fold(0, |best, (c, &s)| if s > scores[best] { c } else { best });
        let exits: Vec<String> = batch[i]
            .1
            .exit_layers()
            .iter()
            .map(|e| e.to_string())
            .collect();
        writeln!(out, "{}\t{pred}\t{}", i + 1, exits.join(","))?;
    }
    let path = ctx.output("predictions.tsv")?;
    write(&path, &out)?;

    let c = model.config;
    let dims = ModelDims::new(c.d_model, c.num_heads, c.d_ff);
    let scheds: Vec<_> = batch.into_iter().map(|(_, s)| s).collect();
    let rep = report(
        &dims,
        l,
        &scheds,
        &BaselineSpec {
            num_layers: l,
            dims,
        },
    )?;
    println!(
        "{} documents, {} tokens; encoder FLOPs {} vs {} without exiting ({:.3}x)",
        corpus.len(),
        corpus.num_tokens(),
        rep.model_flops(),
        rep.baseline_flops(),
        rep.speedup()
    );
    println!("wrote {}", path.display());
    if args.save_model {
        let mpath = ctx.output("model.txt")?;
        write_model(&mpath, &model)?;
        println!("wrote {}", mpath.display());
    }
    Ok(())
}
