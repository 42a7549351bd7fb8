//! Token → bucket → exit-layer lookup tables.
//!
//! Every table assigns each vocabulary entry to one of `B` buckets, and bucket
//! `b` exits at layer `1 + floor(L * b / B)`. Bucket 0 is always the shallowest
//! exit. Builders differ only in how they order tokens into buckets.

mod build;
mod embedding;
mod kmeans;
mod stats;
mod table_io;

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

pub use build::{build_clustered, build_frequency, build_mi, build_random, RandomTables};
pub use embedding::{load_embeddings, parse_embeddings, EmbeddingTable};
pub use kmeans::{kmeans, KMeansConfig, KMeansResult};
pub use stats::{token_label_mi, CorpusStats};
pub use table_io::{load_table, parse_table, write_table};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

pub type TokenId = u32;

/// Bidirectional token string ↔ id map with dense ids `0..V`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Vocab {
    /// Tokens must be unique, non-empty and free of whitespace.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::Input(format!("invalid token {t:?} at id {i}")));
            }
            if index.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Input(format!("duplicate token {t:?}")));
            }
        }
        Ok(Vocab { tokens, index })
    }

    /// Vocabulary in order of first appearance.
    pub fn from_corpus(corpus: &Corpus) -> Self {
        let mut tokens = Vec::new();
        let mut index = HashMap::new();
        for tok in corpus.documents.iter().flatten() {
            if !index.contains_key(tok) {
                index.insert(tok.clone(), tokens.len() as TokenId);
                tokens.push(tok.clone());
            }
        }
        Vocab { tokens, index }
    }

    /// Synthetic vocabulary `w0 .. w{size-1}`.
    pub fn synthetic(size: usize) -> Self {
        Vocab::new((0..size).map(|i| format!("w{i}")).collect())
            .expect("synthetic tokens are valid")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Maps tokens to ids; unknown tokens become `V` (one past the last id).
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TokenId> {
        tokens
            .iter()
            .map(|t| self.id(t.as_ref()).unwrap_or(self.tokens.len() as TokenId))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HashMethod {
    RandCons,
    /// Training-phase table of an inconsistent random pair.
    RandInconsTrain,
    /// Inference-phase table of an inconsistent random pair.
    RandInconsInfer,
    Frequency,
    Mi,
    Clustered,
}

impl HashMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            HashMethod::RandCons => "rand-cons",
            HashMethod::RandInconsTrain => "rand-incons-A",
            HashMethod::RandInconsInfer => "rand-incons-B",
            HashMethod::Frequency => "frequency",
            HashMethod::Mi => "mi",
            HashMethod::Clustered => "clustered",
        }
    }

    /// Whether builders of this method guarantee equal bucket sizes.
    pub fn is_equal_division(self) -> bool {
        !matches!(self, HashMethod::Clustered)
    }
}

impl fmt::Display for HashMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for HashMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rand-cons" => HashMethod::RandCons,
            "rand-incons-A" => HashMethod::RandInconsTrain,
            "rand-incons-B" => HashMethod::RandInconsInfer,
            "frequency" => HashMethod::Frequency,
            "mi" => HashMethod::Mi,
            "clustered" => HashMethod::Clustered,
            other => return Err(Error::Config(format!("unknown hash method {other:?}"))),
        })
    }
}

/// Exit layer (1-based) of bucket `bucket` when `num_buckets` buckets are
/// spread over `num_layers` layers.
pub fn bucket_to_layer(bucket: usize, num_buckets: usize, num_layers: usize) -> Result<usize> {
    if num_buckets == 0 || num_buckets > num_layers {
        return Err(Error::Config(format!(
            "need 1 <= buckets <= layers, got B={num_buckets} L={num_layers}"
        )));
    }
    if bucket >= num_buckets {
        return Err(Error::Config(format!(
            "bucket {bucket} out of range for B={num_buckets}"
        )));
    }
    Ok(1 + num_layers * bucket / num_buckets)
}

pub(crate) fn check_bucket_config(num_buckets: usize, num_layers: usize) -> Result<()> {
    bucket_to_layer(0, num_buckets, num_layers).map(|_| ())
}

/// Immutable token → (bucket, layer) assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashTable {
    method: HashMethod,
    num_buckets: usize,
    num_layers: usize,
    seed: u64,
    tokens: Vec<String>,
    bucket_of: Vec<u32>,
    layer_of: Vec<u32>,
}

impl HashTable {
    /// Assembles a table from per-token buckets, deriving layers.
    pub fn from_buckets(
        method: HashMethod,
        num_buckets: usize,
        num_layers: usize,
        seed: u64,
        vocab: &Vocab,
        bucket_of: Vec<u32>,
    ) -> Result<Self> {
        check_bucket_config(num_buckets, num_layers)?;
        if bucket_of.len() != vocab.len() {
            return Err(Error::Shape(format!(
                "{} bucket assignments for {} tokens",
                bucket_of.len(),
                vocab.len()
            )));
        }
        let layer_of = bucket_of
            .iter()
            .map(|&b| bucket_to_layer(b as usize, num_buckets, num_layers).map(|l| l as u32))
            .collect::<Result<Vec<_>>>()?;
        Ok(HashTable {
            method,
            num_buckets,
            num_layers,
            seed,
            tokens: vocab.tokens().to_vec(),
            bucket_of,
            layer_of,
        })
    }

    pub fn method(&self) -> HashMethod {
        self.method
    }

    pub fn num_buckets(&self) -> usize {
        self.num_buckets
    }

    pub fn num_layers(&self) -> usize {
        self.num_layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn vocab_size(&self) -> usize {
        self.tokens.len()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn vocab(&self) -> Vocab {
        Vocab::new(self.tokens.clone()).expect("table tokens were validated")
    }

    pub fn bucket_of(&self, id: TokenId) -> Option<usize> {
        self.bucket_of.get(id as usize).map(|&b| b as usize)
    }

    /// Exit layer of a token, `None` for ids outside the table.
    pub fn layer_of(&self, id: TokenId) -> Option<usize> {
        self.layer_of.get(id as usize).map(|&l| l as usize)
    }

    /// Exit layer with the unknown-token fallback of layer `L`.
    pub fn layer_or_last(&self, id: TokenId) -> usize {
        self.layer_of(id).unwrap_or(self.num_layers)
    }

    pub fn bucket_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.num_buckets];
        for &b in &self.bucket_of {
            sizes[b as usize] += 1;
        }
        sizes
    }
}

/// Splits `order` into `num_buckets` consecutive chunks; the first
/// `len % num_buckets` chunks get one extra element.
pub(crate) fn equal_chunks(order: &[usize], num_buckets: usize) -> Vec<u32> {
    let v = order.len();
    let base = v / num_buckets;
    let extra = v % num_buckets;
    let mut bucket_of = vec![0u32; v];
    let mut pos = 0;
    for b in 0..num_buckets {
        let size = base + usize::from(b < extra);
        for &tok in &order[pos..pos + size] {
            bucket_of[tok] = b as u32;
        }
        pos += size;
    }
    bucket_of
}
