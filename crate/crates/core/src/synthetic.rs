//! Seeded synthetic corpora and toy tasks.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::hash::{TokenId, Vocab};
use crate::model::LabeledSequence;

pub const CLS_TOKEN: &str = "[CLS]";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZipfConfig {
    pub vocab_size: usize,
    pub num_docs: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub exponent: f64,
    pub seed: u64,
}

impl Default for ZipfConfig {
    fn default() -> Self {
        ZipfConfig {
            vocab_size: 1000,
            num_docs: 10_000,
            min_len: 8,
            max_len: 32,
            exponent: 1.0,
            seed: 0,
        }
    }
}

/// Documents of i.i.d. Zipf-distributed tokens; `w0` is the most frequent.
pub fn zipf_corpus(cfg: &ZipfConfig) -> Result<Corpus> {
    if cfg.vocab_size == 0 || cfg.min_len == 0 || cfg.min_len > cfg.max_len {
        return Err(Error::Config(format!(
            "invalid Zipf corpus settings {cfg:?}"
        )));
    }
    let zipf = Zipf::new(cfg.vocab_size as f64, cfg.exponent)
        .map_err(|e| Error::Config(format!("Zipf exponent {}: {e}", cfg.exponent)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let docs = (0..cfg.num_docs)
        .map(|_| {
            let len = rng.random_range(cfg.min_len..=cfg.max_len);
            (0..len)
                .map(|_| format!("w{}", zipf.sample(&mut rng) as usize - 1))
                .collect()
        })
        .collect();
    Ok(Corpus::unlabeled(docs))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableConfig {
    /// Total vocabulary including the classification token.
    pub vocab_size: usize,
    /// Tokens per sequence including the classification token.
    pub seq_len: usize,
    pub num_classes: usize,
    pub num_train: usize,
    pub num_test: usize,
    /// Fraction of content tokens drawn from the class's signal group.
    pub signal: f64,
    pub seed: u64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        SeparableConfig {
            vocab_size: 48,
            seq_len: 10,
            num_classes: 2,
            num_train: 160,
            num_test: 160,
            signal: 0.3,
            seed: 0,
        }
    }
}

/// Labeled sequences that are linearly separable by bag of words.
#[derive(Debug, Clone, PartialEq)]
pub struct SeparableTask {
    pub vocab: Vocab,
    pub num_classes: usize,
    pub train: Vec<LabeledSequence>,
    pub test: Vec<LabeledSequence>,
}

/// Content ids `1..V` are dealt round-robin into one signal group per class
/// plus a shared noise group.
fn token_groups(vocab_size: usize, num_classes: usize) -> Vec<Vec<TokenId>> {
    let mut groups = vec![Vec::new(); num_classes + 1];
    for t in 1..vocab_size {
        groups[(t - 1) % (num_classes + 1)].push(t as TokenId);
    }
    groups
}

fn task_vocab(size: usize) -> Vocab {
    let mut tokens = vec![CLS_TOKEN.to_string()];
    tokens.extend((1..size).map(|i| format!("w{i}")));
    Vocab::new(tokens).expect("generated tokens are valid")
}

pub fn separable_task(cfg: &SeparableConfig) -> Result<SeparableTask> {
    let c = cfg.num_classes;
    if c < 2
        || cfg.vocab_size < 2 * (c + 1) + 1
        || cfg.seq_len < 2
        || !(0.0..=1.0).contains(&cfg.signal)
    {
        return Err(Error::Config(format!(
            "invalid separable task settings {cfg:?}"
        )));
    }
    let groups = token_groups(cfg.vocab_size, c);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let content = cfg.seq_len - 1;
    let num_signal = ((cfg.signal * content as f64).round() as usize).max(1);
    let draw = |rng: &mut ChaCha8Rng| {
        let label = rng.random_range(0..c);
        let mut body: Vec<TokenId> = (0..content)
            .map(|i| {
                let g = if i < num_signal {
                    &groups[label]
                } else {
                    &groups[c]
                };
                g[rng.random_range(0..g.len())]
            })
            .collect();
        body.shuffle(rng);
        let mut tokens = vec![0];
        tokens.extend(body);
        LabeledSequence { tokens, label }
    };
    let train = (0..cfg.num_train).map(|_| draw(&mut rng)).collect();
    let test = (0..cfg.num_test).map(|_| draw(&mut rng)).collect();
    Ok(SeparableTask {
        vocab: task_vocab(cfg.vocab_size),
        num_classes: c,
        train,
        test,
    })
}

/// A token sequence with one gold class per position.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedSequence {
    pub tokens: Vec<TokenId>,
    pub tags: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaggingTask {
    pub vocab: Vocab,
    pub num_classes: usize,
    pub train: Vec<TaggedSequence>,
    pub test: Vec<TaggedSequence>,
}

/// Each token's tag is fixed by its id, except that a `context_rate` share of
/// positions take the tag of their left neighbour instead.
pub fn tagging_task(cfg: &SeparableConfig, context_rate: f64) -> Result<TaggingTask> {
    let c = cfg.num_classes;
    if c < 2 || cfg.vocab_size < c + 1 || cfg.seq_len < 1 || !(0.0..=1.0).contains(&context_rate) {
        return Err(Error::Config(format!(
            "invalid tagging task settings {cfg:?}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let draw = |rng: &mut ChaCha8Rng| {
        let tokens: Vec<TokenId> = (0..cfg.seq_len)
            .map(|_| rng.random_range(1..cfg.vocab_size) as TokenId)
            .collect();
        let mut tags: Vec<usize> = tokens.iter().map(|&t| t as usize % c).collect();
        for p in 1..tags.len() {
            if rng.random_bool(context_rate) {
                tags[p] = tokens[p - 1] as usize % c;
            }
        }
        TaggedSequence { tokens, tags }
    };
    let train = (0..cfg.num_train).map(|_| draw(&mut rng)).collect();
    let test = (0..cfg.num_test).map(|_| draw(&mut rng)).collect();
    Ok(TaggingTask {
        vocab: task_vocab(cfg.vocab_size),
        num_classes: c,
        train,
        test,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hash::CorpusStats;

    #[test]
    fn zipf_is_head_heavy() {
        let cfg = ZipfConfig {
            vocab_size: 100,
            num_docs: 500,
            ..ZipfConfig::default()
        };
        let corpus = zipf_corpus(&cfg).unwrap();
        assert_eq!(corpus.len(), 500);
        let vocab = Vocab::synthetic(100);
        let stats = CorpusStats::from_corpus(&corpus, &vocab);
        assert!(stats.freq[0] > stats.freq[10]);
        assert!(stats.freq[0] > 5 * stats.freq[50].max(1));
        assert_eq!(zipf_corpus(&cfg).unwrap(), corpus);
    }

    #[test]
    fn separable_sequences_carry_signal() {
        let cfg = SeparableConfig::default();
        let task = separable_task(&cfg).unwrap();
        let groups = token_groups(cfg.vocab_size, cfg.num_classes);
        for s in task.train.iter().chain(&task.test) {
            assert_eq!(s.tokens.len(), cfg.seq_len);
            assert_eq!(s.tokens[0], 0);
            let hits = s
                .tokens
                .iter()
                .filter(|t| groups[s.label].contains(t))
                .count();
            assert!(hits >= 1);
            for other in (0..cfg.num_classes).filter(|&o| o != s.label) {
                assert!(s.tokens.iter().all(|t| !groups[other].contains(t)));
            }
        }
        assert_eq!(separable_task(&cfg).unwrap(), task);
    }

    #[test]
    fn tagging_without_context_is_token_identity() {
        let cfg = SeparableConfig::default();
        let task = tagging_task(&cfg, 0.0).unwrap();
        for s in &task.train {
            for (t, &y) in s.tokens.iter().zip(&s.tags) {
                assert_eq!(*t as usize % 2, y);
            }
        }
    }

    #[test]
    fn rejects_bad_settings() {
        let cfg = SeparableConfig {
            num_classes: 1,
            ..SeparableConfig::default()
        };
        assert!(separable_task(&cfg).is_err());
        assert!(zipf_corpus(&ZipfConfig {
            min_len: 0,
            ..ZipfConfig::default()
        })
        .is_err());
    }
}
