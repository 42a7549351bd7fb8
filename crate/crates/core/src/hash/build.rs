use std::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::kmeans::{kmeans, KMeansConfig};
use super::stats::token_label_mi;
use super::{
    check_bucket_config, equal_chunks, CorpusStats, EmbeddingTable, HashMethod, HashTable, Vocab,
};
use crate::error::{Error, Result};
use crate::numeric::l2_norm;

/// Output of the random builder.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RandomTables {
    /// One table shared by training and inference.
    Consistent(HashTable),
    /// Independent tables for the two phases.
    Inconsistent { train: HashTable, infer: HashTable },
}

// ChaCha stream ids keep the three random tables independent under one seed.
const STREAM_CONS: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const STREAM_INFER: u64 = 2;

fn random_buckets(v: usize, num_buckets: usize, seed: u64, stream: u64) -> Vec<u32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let mut order: Vec<usize> = (0..v).collect();
    order.shuffle(&mut rng);
    equal_chunks(&order, num_buckets)
}

pub fn build_random(
    vocab: &Vocab,
    num_buckets: usize,
    num_layers: usize,
    seed: u64,
    consistent: bool,
) -> Result<RandomTables> {
    check_bucket_config(num_buckets, num_layers)?;
    if vocab.is_empty() {
        return Err(Error::Config("cannot hash an empty vocabulary".into()));
    }
    let make = |method, stream| {
        let buckets = random_buckets(vocab.len(), num_buckets, seed, stream);
        HashTable::from_buckets(method, num_buckets, num_layers, seed, vocab, buckets)
    };
    if consistent {
        Ok(RandomTables::Consistent(make(
            HashMethod::RandCons,
            STREAM_CONS,
        )?))
    } else {
        Ok(RandomTables::Inconsistent {
            train: make(HashMethod::RandInconsTrain, STREAM_TRAIN)?,
            infer: make(HashMethod::RandInconsInfer, STREAM_INFER)?,
        })
    }
}

/// Sorts ids by descending key, ascending id on ties, and chunks equally.
fn rank_descending(keys: &[f64], num_buckets: usize) -> Vec<u32> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| {
        keys[b]
            .partial_cmp(&keys[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    equal_chunks(&order, num_buckets)
}

/// Frequent tokens go to the shallow buckets.
pub fn build_frequency(
    vocab: &Vocab,
    stats: &CorpusStats,
    num_buckets: usize,
    num_layers: usize,
) -> Result<HashTable> {
    check_bucket_config(num_buckets, num_layers)?;
    if stats.freq.len() != vocab.len() {
        return Err(Error::Shape(format!(
            "frequency counts cover {} tokens, vocabulary has {}",
            stats.freq.len(),
            vocab.len()
        )));
    }
    if vocab.is_empty() {
        return Err(Error::Config("cannot hash an empty vocabulary".into()));
    }
    let keys: Vec<f64> = stats.freq.iter().map(|&f| f as f64).collect();
    let buckets = rank_descending(&keys, num_buckets);
    HashTable::from_buckets(
        HashMethod::Frequency,
        num_buckets,
        num_layers,
        0,
        vocab,
        buckets,
    )
}

/// Tokens most informative about the label go to the shallow buckets.
pub fn build_mi(
    vocab: &Vocab,
    stats: &CorpusStats,
    num_buckets: usize,
    num_layers: usize,
) -> Result<HashTable> {
    check_bucket_config(num_buckets, num_layers)?;
    if stats.vocab_size() != vocab.len() {
        return Err(Error::Shape(format!(
            "statistics cover {} tokens, vocabulary has {}",
            stats.vocab_size(),
            vocab.len()
        )));
    }
    if vocab.is_empty() {
        return Err(Error::Config("cannot hash an empty vocabulary".into()));
    }
    let keys = (0..vocab.len() as u32)
        .map(|t| token_label_mi(stats, t))
        .collect::<Result<Vec<_>>>()?;
    let buckets = rank_descending(&keys, num_buckets);
    HashTable::from_buckets(HashMethod::Mi, num_buckets, num_layers, 0, vocab, buckets)
}

/// k-means over embeddings with `k = B`; clusters with smaller mean norm exit
/// earlier. Bucket sizes follow the clusters and need not be equal.
pub fn build_clustered(
    vocab: &Vocab,
    emb: &EmbeddingTable,
    num_buckets: usize,
    num_layers: usize,
    seed: u64,
) -> Result<HashTable> {
    check_bucket_config(num_buckets, num_layers)?;
    let points = emb.aligned(vocab)?;
    let result = kmeans(&points, &KMeansConfig::new(num_buckets, seed))?;

    let mut norm_sum = vec![0.0; num_buckets];
    for (p, &c) in points.iter().zip(&result.assignment) {
        norm_sum[c] += l2_norm(p);
    }
    let sizes = result.cluster_sizes();
    let mean_norm: Vec<f64> = norm_sum
        .iter()
        .zip(&sizes)
        .map(|(s, &n)| s / n as f64)
        .collect();

    let mut order: Vec<usize> = (0..num_buckets).collect();
    order.sort_by(|&a, &b| {
        mean_norm[a]
            .partial_cmp(&mean_norm[b])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut rank = vec![0u32; num_buckets];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r as u32;
    }
    let buckets = result.assignment.iter().map(|&c| rank[c]).collect();
    HashTable::from_buckets(
        HashMethod::Clustered,
        num_buckets,
        num_layers,
        seed,
        vocab,
        buckets,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_corpus;

    fn six_tokens() -> (Vocab, CorpusStats) {
        let vocab = Vocab::new(["a", "b", "c", "d", "e", "f"].map(String::from).to_vec()).unwrap();
        (
            vocab,
            CorpusStats::from_frequencies(vec![100, 50, 40, 10, 5, 1]),
        )
    }

    fn layers(t: &HashTable) -> Vec<usize> {
        (0..t.vocab_size() as u32)
            .map(|i| t.layer_of(i).unwrap())
            .collect()
    }

    #[test]
    fn frequency_fixture() {
        let (v, s) = six_tokens();
        let t = build_frequency(&v, &s, 3, 6).unwrap();
        assert_eq!(layers(&t), vec![1, 1, 3, 3, 5, 5]);
    }

    #[test]
    fn frequency_ties_use_id_order() {
        let v = Vocab::synthetic(5);
        let t = build_frequency(&v, &CorpusStats::from_frequencies(vec![7; 5]), 2, 4).unwrap();
        assert_eq!(layers(&t), vec![1, 1, 1, 3, 3]);
    }

    #[test]
    fn single_bucket_everything_first_layer() {
        let (v, s) = six_tokens();
        assert!(layers(&build_frequency(&v, &s, 1, 6).unwrap())
            .iter()
            .all(|&l| l == 1));
        let RandomTables::Consistent(t) = build_random(&v, 1, 6, 3, true).unwrap() else {
            panic!()
        };
        assert!(layers(&t).iter().all(|&l| l == 1));
    }

    #[test]
    fn random_is_deterministic() {
        let v = Vocab::synthetic(50);
        assert_eq!(
            build_random(&v, 4, 8, 9, true).unwrap(),
            build_random(&v, 4, 8, 9, true).unwrap()
        );
        assert_ne!(
            build_random(&v, 4, 8, 9, true).unwrap(),
            build_random(&v, 4, 8, 10, true).unwrap()
        );
    }

    #[test]
    fn inconsistent_tables_differ() {
        let v = Vocab::synthetic(8);
        for seed in 0..50 {
            let RandomTables::Inconsistent { train, infer } =
                build_random(&v, 2, 2, seed, false).unwrap()
            else {
                panic!()
            };
            assert_eq!(train.method(), HashMethod::RandInconsTrain);
            assert_eq!(infer.method(), HashMethod::RandInconsInfer);
            let differ = (0..8).any(|t| train.bucket_of(t) != infer.bucket_of(t));
            assert!(differ, "seed {seed} produced identical phase tables");
        }
    }

    #[test]
    fn random_rejects_empty_vocab() {
        assert!(build_random(&Vocab::synthetic(0), 1, 1, 0, true).is_err());
    }

    #[test]
    fn mi_two_tokens() {
        // "k" fully predicts the label; "j" appears in 3 of 4 documents.
        let c = parse_corpus("0\tk j\n0\tk j\n1\tj\n1\tz\n", true).unwrap();
        let v = Vocab::from_corpus(&c);
        let s = CorpusStats::from_corpus(&c, &v);
        let mk = token_label_mi(&s, v.id("k").unwrap()).unwrap();
        let mj = token_label_mi(&s, v.id("j").unwrap()).unwrap();
        assert!(mk > mj);
        let t = build_mi(&v, &s, 3, 3).unwrap();
        assert_eq!(t.layer_of(v.id("k").unwrap()), Some(1));
    }

    #[test]
    fn mi_ties_use_id_order() {
        let c = parse_corpus("0\ta b c d\n1\ta b c d\n", true).unwrap();
        let v = Vocab::from_corpus(&c);
        let s = CorpusStats::from_corpus(&c, &v);
        assert_eq!(layers(&build_mi(&v, &s, 2, 2).unwrap()), vec![1, 1, 2, 2]);
    }

    #[test]
    fn clustered_low_norm_first() {
        let entries = vec![
            ("big1".to_string(), vec![2.0, 0.0]),
            ("small1".to_string(), vec![0.0, 0.5]),
            ("big2".to_string(), vec![2.0, 0.1]),
            ("small2".to_string(), vec![0.0, 0.45]),
        ];
        let emb = EmbeddingTable::new(2, entries).unwrap();
        let v = emb.vocab().unwrap();
        let t = build_clustered(&v, &emb, 2, 2, 7).unwrap();
        assert_eq!(layers(&t), vec![2, 1, 2, 1]);
    }

    #[test]
    fn clustered_degenerate_embeddings() {
        let entries = (0..6).map(|i| (format!("t{i}"), vec![1.0, 1.0])).collect();
        let emb = EmbeddingTable::new(2, entries).unwrap();
        let v = emb.vocab().unwrap();
        let t = build_clustered(&v, &emb, 3, 6, 1).unwrap();
        assert_eq!(t.bucket_sizes().iter().sum::<usize>(), 6);
        assert!(t.bucket_sizes().iter().all(|&s| s >= 1));
        let t1 = build_clustered(&v, &emb, 1, 6, 1).unwrap();
        assert!(layers(&t1).iter().all(|&l| l == 1));
    }
}
