pub mod ablate;
pub mod build_hash;
pub mod difficulty;
pub mod flops;
pub mod infer;

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context as _, Result};
use hashee_core::corpus::{load_corpus, Corpus};
use hashee_core::hash::{load_table, HashTable};
use hashee_core::model::{schedule, ExitSchedule, SchedulePolicy};

pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Context {
    /// Path inside the output directory, creating the directory if needed.
    pub fn output(&self, name: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)
            .with_context(|| format!("creating --out-dir {}", self.out_dir.display()))?;
        Ok(self.out_dir.join(name))
    }
}

pub fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

pub fn read_corpus(path: &Path, labeled: bool) -> Result<Corpus> {
    let corpus =
        load_corpus(path, labeled).with_context(|| format!("--corpus {}", path.display()))?;
    if corpus.skipped_empty > 0 {
        eprintln!(
            "note: skipped {} empty line(s) in {}",
            corpus.skipped_empty,
            path.display()
        );
    }
    Ok(corpus)
}

pub fn read_table(path: &Path, flag: &str) -> Result<HashTable> {
    load_table(path).with_context(|| format!("{flag} {}", path.display()))
}

pub fn check_layers(table: &HashTable, layers: Option<usize>) -> Result<usize> {
    match layers {
        Some(l) if l != table.num_layers() => bail!(
            "--layers {l} does not match the table, which was built for {} layers",
            table.num_layers()
        ),
        _ => Ok(table.num_layers()),
    }
}

pub fn policy(unpinned: bool) -> SchedulePolicy {
    if unpinned {
        SchedulePolicy::unpinned()
    } else {
        SchedulePolicy::default()
    }
}

/// Token ids (unknown tokens map to `V`) and exit schedules per document.
pub fn schedules(
    corpus: &Corpus,
    table: &HashTable,
    policy: &SchedulePolicy,
) -> Result<Vec<(Vec<u32>, ExitSchedule)>> {
    let vocab = table.vocab();
    corpus
        .documents
        .iter()
        .map(|doc| {
            let ids = vocab.encode(doc);
            let s = schedule(&ids, table, table.num_layers(), policy)?;
            Ok((ids, s))
        })
        .collect()
}

/// Parses `a..b` (inclusive) or a comma-separated list.
pub fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    if let Some((a, b)) = text.split_once("..") {
        let a: u64 = a
            .trim()
            .parse()
            .with_context(|| format!("--seeds {text:?}"))?;
        let b: u64 = b
            .trim()
            .parse()
            .with_context(|| format!("--seeds {text:?}"))?;
        if a > b {
            bail!("--seeds range {text:?} is empty");
        }
        return Ok((a..=b).collect());
    }
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .with_context(|| format!("--seeds {text:?}: bad seed {s:?}"))
        })
        .collect()
}
