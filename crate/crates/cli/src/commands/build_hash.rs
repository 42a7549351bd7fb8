use std::path::PathBuf;

use anyhow::{bail, Context as _, Result};
use clap::ValueEnum;
use hashee_core::hash::{
    build_clustered, build_frequency, build_mi, build_random, load_embeddings, CorpusStats,
    HashTable, RandomTables, Vocab,
};

use super::{read_corpus, write, Context};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Random,
    Frequency,
    Mi,
    Clustered,
}

#[derive(Debug, clap::Args)]
pub struct Args {
    #[arg(long, value_enum)]
    method: Method,
    #[arg(long)]
    buckets: usize,
    #[arg(long)]
    layers: usize,
    /// Corpus giving the vocabulary and statistics; labeled (`<label>\t<text>`) for mi.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Token embeddings for the clustered method.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Random method only: one table for both phases, or a train/infer pair.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    consistent: bool,
    /// Output table path; defaults to `<out-dir>/<method>.hash`.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn histogram(table: &HashTable) -> String {
    let mut out = format!(
        "{} table: {} tokens, B={}, L={}\n",
        table.method(),
        table.vocab_size(),
        table.num_buckets(),
        table.num_layers()
    );
    for (b, size) in table.bucket_sizes().iter().enumerate() {
        let layer = hashee_core::hash::bucket_to_layer(b, table.num_buckets(), table.num_layers())
            .expect("table buckets are valid");
        out.push_str(&format!("  bucket {b} -> layer {layer}: {size} tokens\n"));
    }
    out
}

fn require<'a>(opt: &'a Option<PathBuf>, flag: &str, method: &str) -> Result<&'a PathBuf> {
    opt.as_ref()
        .with_context(|| format!("{flag} is required for --method {method}"))
}

/// Builds the table(s) and returns `(suffix, table)` pairs.
pub fn build(ctx: &Context, args: &Args) -> Result<Vec<(&'static str, HashTable)>> {
    if args.buckets == 0 || args.buckets > args.layers {
        bail!(
            "--buckets {} must be between 1 and --layers {}",
            args.buckets,
            args.layers
        );
    }
    if args.method != Method::Random && !args.consistent {
        bail!("--consistent false only applies to --method random");
    }
    let (b, l) = (args.buckets, args.layers);
    Ok(match args.method {
        Method::Random => {
            let vocab = match (&args.corpus, &args.embeddings) {
                (Some(c), _) => Vocab::from_corpus(&read_corpus(c, false)?),
                (None, Some(e)) => load_embeddings(e)
                    .with_context(|| format!("--embeddings {}", e.display()))?
                    .vocab()?,
                (None, None) => bail!("--corpus is required for --method random"),
            };
            if vocab.is_empty() {
                bail!("--corpus has no tokens");
            }
            match build_random(&vocab, b, l, ctx.seed, args.consistent)? {
                RandomTables::Consistent(t) => vec![("", t)],
                RandomTables::Inconsistent { train, infer } => {
                    vec![(".train", train), (".infer", infer)]
                }
            }
        }
        Method::Frequency => {
            let corpus = read_corpus(require(&args.corpus, "--corpus", "frequency")?, false)?;
            let vocab = Vocab::from_corpus(&corpus);
            if vocab.is_empty() {
                bail!("--corpus has no tokens");
            }
            let stats = CorpusStats::from_corpus(&corpus, &vocab);
            vec![("", build_frequency(&vocab, &stats, b, l)?)]
        }
        Method::Mi => {
            let path = require(&args.corpus, "--corpus", "mi")?;
            let corpus = read_corpus(path, true)
                .context("--method mi needs a labeled corpus (<label>\\t<text> per line)")?;
            let vocab = Vocab::from_corpus(&corpus);
            if vocab.is_empty() {
                bail!("--corpus has no tokens");
            }
            let stats = CorpusStats::from_corpus(&corpus, &vocab);
            vec![("", build_mi(&vocab, &stats, b, l)?)]
        }
        Method::Clustered => {
            let path = require(&args.embeddings, "--embeddings", "clustered")?;
            let emb = load_embeddings(path)
                .with_context(|| format!("--embeddings {}", path.display()))?;
            let vocab = match &args.corpus {
                Some(c) => Vocab::from_corpus(&read_corpus(c, false)?),
                None => emb.vocab()?,
            };
            vec![("", build_clustered(&vocab, &emb, b, l, ctx.seed)?)]
        }
    })
}

pub fn run(ctx: &Context, args: &Args) -> Result<()> {
    let tables = build(ctx, args)?;
    let base = match &args.out {
        Some(p) => p.clone(),
        None => ctx.output(&format!(
            "{}.hash",
            format!("{:?}", args.method).to_lowercase()
        ))?,
    };
    for (suffix, table) in &tables {
        let mut path = base.clone().into_os_string();
        path.push(suffix);
        let path = PathBuf::from(path);
        write(&path, &table.to_text())?;
        print!("{}", histogram(table));
        println!("  wrote {}", path.display());
    }
    Ok(())
}
