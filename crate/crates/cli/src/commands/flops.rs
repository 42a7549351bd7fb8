use std::path::PathBuf;

use anyhow::{bail, Result};
use hashee_core::flops::{report, BaselineSpec, FlopsReport, ModelDims};

use super::{check_layers, policy, read_corpus, read_table, schedules, write, Context};

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long)]
    table: PathBuf,
    #[arg(long)]
    corpus: PathBuf,
    /// Expected layer count; must match the table.
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long, default_value_t = 768)]
    d_model: usize,
    #[arg(long, default_value_t = 12)]
    heads: usize,
    #[arg(long, default_value_t = 3072)]
    d_ff: usize,
    /// Layers of the no-exit baseline; defaults to the table's layer count.
    #[arg(long)]
    baseline_layers: Option<usize>,
    /// Let position 0 follow the table instead of running every layer.
    #[arg(long)]
    unpinned: bool,
}

pub fn compute(args: &Args) -> Result<FlopsReport> {
    let table = read_table(&args.table, "--table")?;
    let l = check_layers(&table, args.layers)?;
    let dims = ModelDims::new(args.d_model, args.heads, args.d_ff);
    if let Err(e) = dims.validate() {
        bail!("--d-model/--heads/--d-ff: {e}");
    }
    let baseline_layers = args.baseline_layers.unwrap_or(l);
    if baseline_layers == 0 {
        bail!("--baseline-layers must be positive");
    }
    let corpus = read_corpus(&args.corpus, false)?;
    if corpus.is_empty() {
        bail!("--corpus {} has no documents", args.corpus.display());
    }
    let scheds: Vec<_> = schedules(&corpus, &table, &policy(args.unpinned))?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let baseline = BaselineSpec {
        num_layers: baseline_layers,
        dims,
    };
    Ok(report(&dims, l, &scheds, &baseline)?)
}

pub fn run(ctx: &Context, args: &Args) -> Result<()> {
    let rep = compute(args)?;
    let text = rep.to_text();
    write(&ctx.output("flops.txt")?, &text)?;
    write(&ctx.output("flops.csv")?, &rep.to_csv())?;
    print!("{text}");
    Ok(())
}
