use std::collections::HashMap;
use std::fs;
use std::path::Path;

use super::Vocab;
use crate::error::{Error, Result};

/// Token embeddings read from a `<V> <dim>` headed text file.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    tokens: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize, entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let mut tokens = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len());
        let mut index = HashMap::with_capacity(entries.len());
        for (tok, vec) in entries {
            if vec.len() != dim {
                return Err(Error::Shape(format!(
                    "embedding for {tok:?} has {} values, expected {dim}",
                    vec.len()
                )));
            }
            if vec.iter().any(|v| !v.is_finite()) {
                return Err(Error::Input(format!("embedding for {tok:?} is not finite")));
            }
            if index.insert(tok.clone(), tokens.len()).is_some() {
                return Err(Error::Input(format!("duplicate embedding for {tok:?}")));
            }
            tokens.push(tok);
            vectors.push(vec);
        }
        Ok(EmbeddingTable {
            dim,
            tokens,
            vectors,
            index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.vectors[i].as_slice())
    }

    /// Vocabulary in file order.
    pub fn vocab(&self) -> Result<Vocab> {
        Vocab::new(self.tokens.clone())
    }

    /// Vectors for every vocabulary token, in id order.
    pub fn aligned(&self, vocab: &Vocab) -> Result<Vec<Vec<f64>>> {
        vocab
            .tokens()
            .iter()
            .map(|t| {
                self.get(t)
                    .map(<[f64]>::to_vec)
                    .ok_or_else(|| Error::Input(format!("no embedding for token {t:?}")))
            })
            .collect()
    }
}

pub fn parse_embeddings(text: &str) -> Result<EmbeddingTable> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(1, "missing `<V> <dim>` header"))?;
    let mut parts = header.split_whitespace();
    let mut next_usize = |what: &str| -> Result<usize> {
        parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::parse(1, format!("header is missing {what}")))
    };
    let count = next_usize("vocabulary size")?;
    let dim = next_usize("dimension")?;

    let mut entries = Vec::with_capacity(count);
    for (i, line) in lines {
        let mut fields = line.split_whitespace();
        let tok = fields.next().expect("non-empty line");
        let vec = fields
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::parse(i + 1, format!("bad number: {e}")))?;
        if vec.len() != dim {
            return Err(Error::parse(
                i + 1,
                format!("expected {dim} values, found {}", vec.len()),
            ));
        }
        entries.push((tok.to_string(), vec));
    }
    if entries.len() != count {
        return Err(Error::parse(
            1,
            format!(
                "header announces {count} vectors, file has {}",
                entries.len()
            ),
        ));
    }
    EmbeddingTable::new(dim, entries)
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingTable> {
    parse_embeddings(&fs::read_to_string(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_small_file() {
        let e = parse_embeddings("2 3\na 1 0 0\nb 0 1.5 -2\n").unwrap();
        assert_eq!(e.dim(), 3);
        assert_eq!(e.get("b").unwrap(), &[0.0, 1.5, -2.0]);
        assert_eq!(e.vocab().unwrap().tokens(), &["a", "b"]);
    }

    #[test]
    fn wrong_width_is_reported() {
        let err = parse_embeddings("1 3\na 1 0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn count_mismatch() {
        assert!(parse_embeddings("3 1\na 1\n").is_err());
    }

    #[test]
    fn missing_token_when_aligning() {
        let e = parse_embeddings("1 1\na 1\n").unwrap();
        let v = Vocab::new(vec!["a".into(), "b".into()]).unwrap();
        assert!(e.aligned(&v).is_err());
    }
}
