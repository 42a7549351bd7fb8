use std::collections::BTreeSet;

use super::{TokenId, Vocab};
use crate::corpus::Corpus;
use crate::error::{Error, Result};

/// Document-level label statistics for mutual-information ranking.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelStats {
    /// Distinct labels, sorted.
    pub names: Vec<String>,
    /// Documents carrying each label.
    pub doc_counts: Vec<u64>,
    /// `cooccur[t][y]`: documents with label `y` that contain token `t`.
    pub cooccur: Vec<Vec<u64>>,
}

/// Token frequencies and, for labeled corpora, token/label co-occurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStats {
    /// Total occurrences per token id.
    pub freq: Vec<u64>,
    /// Documents containing each token at least once.
    pub doc_freq: Vec<u64>,
    pub doc_count: u64,
    pub labels: Option<LabelStats>,
}

impl CorpusStats {
    /// Counts over `corpus`; tokens missing from `vocab` are ignored.
    pub fn from_corpus(corpus: &Corpus, vocab: &Vocab) -> Self {
        let v = vocab.len();
        let mut freq = vec![0u64; v];
        let mut doc_freq = vec![0u64; v];
        let label_names: Option<Vec<String>> = corpus.labels.as_ref().map(|ls| {
            ls.iter()
                .cloned()
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect()
        });
        let mut label_docs = label_names.as_ref().map(|n| vec![0u64; n.len()]);
        let mut cooccur = label_names.as_ref().map(|n| vec![vec![0u64; n.len()]; v]);
        let mut seen = vec![usize::MAX; v];

        for (d, doc) in corpus.documents.iter().enumerate() {
            let label_idx = match (&corpus.labels, &label_names) {
                (Some(ls), Some(names)) => {
                    Some(names.binary_search(&ls[d]).expect("label indexed"))
                }
                _ => None,
            };
            if let (Some(y), Some(counts)) = (label_idx, label_docs.as_mut()) {
                counts[y] += 1;
            }
            for tok in doc {
                let Some(id) = vocab.id(tok) else { continue };
                let t = id as usize;
                freq[t] += 1;
                if seen[t] != d {
                    seen[t] = d;
                    doc_freq[t] += 1;
                    if let (Some(y), Some(co)) = (label_idx, cooccur.as_mut()) {
                        co[t][y] += 1;
                    }
                }
            }
        }

        let labels = match (label_names, label_docs, cooccur) {
            (Some(names), Some(doc_counts), Some(cooccur)) => Some(LabelStats {
                names,
                doc_counts,
                cooccur,
            }),
            _ => None,
        };
        CorpusStats {
            freq,
            doc_freq,
            doc_count: corpus.len() as u64,
            labels,
        }
    }

    /// Frequency-only statistics.
    pub fn from_frequencies(freq: Vec<u64>) -> Self {
        let doc_freq = freq.iter().map(|&f| u64::from(f > 0)).collect();
        CorpusStats {
            freq,
            doc_freq,
            doc_count: 1,
            labels: None,
        }
    }

    /// Checks that co-occurrence marginals agree with presence and label counts.
    pub fn validate(&self) -> Result<()> {
        if self.freq.len() != self.doc_freq.len() {
            return Err(Error::Shape("freq and doc_freq lengths differ".into()));
        }
        for (t, (&f, &df)) in self.freq.iter().zip(&self.doc_freq).enumerate() {
            if df > f || df > self.doc_count {
                return Err(Error::Input(format!(
                    "token {t}: presence count {df} inconsistent"
                )));
            }
        }
        if let Some(ls) = &self.labels {
            if ls.doc_counts.iter().sum::<u64>() != self.doc_count {
                return Err(Error::Input(
                    "label counts do not sum to the document count".into(),
                ));
            }
            if ls.cooccur.len() != self.freq.len() {
                return Err(Error::Shape(
                    "co-occurrence rows do not cover the vocabulary".into(),
                ));
            }
            for (t, row) in ls.cooccur.iter().enumerate() {
                if row.len() != ls.names.len() {
                    return Err(Error::Shape(format!(
                        "token {t}: co-occurrence width mismatch"
                    )));
                }
                if row.iter().sum::<u64>() != self.doc_freq[t] {
                    return Err(Error::Input(format!(
                        "token {t}: co-occurrence does not sum to presence count"
                    )));
                }
                if row.iter().zip(&ls.doc_counts).any(|(c, n)| c > n) {
                    return Err(Error::Input(format!(
                        "token {t}: co-occurrence exceeds label count"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn vocab_size(&self) -> usize {
        self.freq.len()
    }
}

/// Mutual information (nats) between a token's document-level presence and
/// the document label, from empirical document fractions.
pub fn token_label_mi(stats: &CorpusStats, token: TokenId) -> Result<f64> {
    let ls = stats
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("mutual information needs a labeled corpus".into()))?;
    let t = token as usize;
    if t >= stats.doc_freq.len() {
        return Err(Error::Input(format!("token id {token} outside statistics")));
    }
    if stats.doc_count == 0 {
        return Ok(0.0);
    }
    let n = stats.doc_count as f64;
    let present = stats.doc_freq[t] as f64;
    let p_t = [(n - present) / n, present / n];
    let mut mi = 0.0;
    for (y, &ny) in ls.doc_counts.iter().enumerate() {
        let p_y = ny as f64 / n;
        let with = ls.cooccur[t][y] as f64;
        let joint = [(ny as f64 - with) / n, with / n];
        for (pj, pt) in joint.into_iter().zip(p_t) {
            if pj > 0.0 {
                mi += pj * (pj / (pt * p_y)).ln();
            }
        }
    }
    Ok(mi.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    fn stats(text: &str) -> (Vocab, CorpusStats) {
        let c = parse_corpus(text, true).unwrap();
        let v = Vocab::from_corpus(&c);
        let s = CorpusStats::from_corpus(&c, &v);
        s.validate().unwrap();
        (v, s)
    }

    #[test]
    fn counts() {
        let (v, s) = stats("a\tx x y\nb\tx z\n");
        let x = v.id("x").unwrap() as usize;
        assert_eq!(s.freq[x], 3);
        assert_eq!(s.doc_freq[x], 2);
        assert_eq!(s.labels.as_ref().unwrap().names, vec!["a", "b"]);
    }

    #[test]
    fn mi_zero_when_always_present() {
        let (v, s) = stats("0\tk a\n0\tk b\n1\tk c\n1\tk d\n");
        assert_eq!(token_label_mi(&s, v.id("k").unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn mi_ln2_when_token_determines_label() {
        let (v, s) = stats("0\ta\n0\tb\n1\tk c\n1\tk d\n");
        let mi = token_label_mi(&s, v.id("k").unwrap()).unwrap();
        assert!((mi - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn mi_zero_when_independent() {
        let (v, s) = stats("0\tk a\n0\tb\n1\tk c\n1\td\n");
        let mi = token_label_mi(&s, v.id("k").unwrap()).unwrap();
        assert!(mi.abs() < 1e-15);
    }

    #[test]
    fn mi_needs_labels() {
        let s = CorpusStats::from_frequencies(vec![1, 2]);
        assert!(matches!(token_label_mi(&s, 0), Err(Error::Config(_))));
    }
}
