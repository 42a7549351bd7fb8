//! Plain-text corpora: one whitespace-tokenised document per line, optionally
//! prefixed by `<label>\t`.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Corpus {
    pub documents: Vec<Vec<String>>,
    /// One label per document when the corpus is labeled.
    pub labels: Option<Vec<String>>,
    /// Blank lines dropped while loading.
    pub skipped_empty: usize,
}

impl Corpus {
    pub fn unlabeled(documents: Vec<Vec<String>>) -> Self {
        Corpus {
            documents,
            labels: None,
            skipped_empty: 0,
        }
    }

    pub fn labeled(documents: Vec<Vec<String>>, labels: Vec<String>) -> Result<Self> {
        if documents.len() != labels.len() {
            return Err(Error::Input(format!(
                "{} documents but {} labels",
                documents.len(),
                labels.len()
            )));
        }
        Ok(Corpus {
            documents,
            labels: Some(labels),
            skipped_empty: 0,
        })
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn num_tokens(&self) -> usize {
        self.documents.iter().map(Vec::len).sum()
    }

    /// Serialises in the same format `parse_corpus` reads.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, doc) in self.documents.iter().enumerate() {
            if let Some(labels) = &self.labels {
                out.push_str(&labels[i]);
                out.push('\t');
            }
            out.push_str(&doc.join(" "));
            out.push('\n');
        }
        out
    }
}

pub fn parse_corpus(text: &str, labeled: bool) -> Result<Corpus> {
    let mut documents = Vec::new();
    let mut labels = Vec::new();
    let mut skipped = 0;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            skipped += 1;
            continue;
        }
        let body = if labeled {
            let (label, body) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(line_no, "labeled line has no tab separator"))?;
            let label = label.trim();
            if label.is_empty() {
                return Err(Error::parse(line_no, "empty label"));
            }
            labels.push(label.to_string());
            body
        } else {
            line
        };
        documents.push(body.split_whitespace().map(str::to_string).collect());
    }
    Ok(Corpus {
        documents,
        labels: labeled.then_some(labels),
        skipped_empty: skipped,
    })
}

pub fn load_corpus(path: impl AsRef<Path>, labeled: bool) -> Result<Corpus> {
    let text = fs::read_to_string(path)?;
    parse_corpus(&text, labeled)
}

pub fn write_corpus(path: impl AsRef<Path>, corpus: &Corpus) -> Result<()> {
    let mut f = fs::File::create(path)?;
    f.write_all(corpus.to_text().as_bytes())?;
    Ok(())
}
