use proptest::prelude::*;

use hashee_core::corpus::{parse_corpus, Corpus};
use hashee_core::flops::{report, BaselineSpec, ModelDims};
use hashee_core::hash::{
    build_frequency, build_random, parse_table, CorpusStats, RandomTables, Vocab,
};
use hashee_core::model::{
    attention_probabilities, forward, forward_batch, parse_model, EncoderConfig, EncoderModel,
    ExitSchedule,
};

fn model(layers: usize, seed: u64) -> EncoderModel {
    EncoderModel::random(EncoderConfig::new(layers, 4, 2, 6, 10), Some(2), seed).unwrap()
}

fn schedule_strategy() -> impl Strategy<Value = (usize, Vec<usize>, Vec<u32>)> {
    (1usize..=4).prop_flat_map(|l| {
        (1usize..=8).prop_flat_map(move |n| {
            (
                Just(l),
                prop::collection::vec(1..=l, n),
                prop::collection::vec(0u32..10, n),
            )
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn attention_rows_sum_to_one((l, exits, tokens) in schedule_strategy(), seed in 0u64..1000) {
        let m = model(l, seed);
        let sched = ExitSchedule::from_layers(exits, l).unwrap();
        let trace = forward(&m, &tokens, &sched).unwrap();
        let keys = sched.key_positions();
        for layer in 1..=l {
            let active = sched.active_at(layer);
            let probs = attention_probabilities(
                &trace.hidden[layer - 1], &keys, &active, &m.layers[layer - 1], 2,
            ).unwrap();
            for head in &probs {
                for r in 0..head.rows() {
                    let s: f64 = head.row(r).iter().sum();
                    prop_assert!((s - 1.0).abs() < 1e-12);
                    prop_assert!(head.row(r).iter().all(|&p| p >= 0.0));
                }
            }
        }
    }

    #[test]
    fn active_sets_shrink((l, exits, tokens) in schedule_strategy(), seed in 0u64..1000) {
        let m = model(l, seed);
        let sched = ExitSchedule::from_layers(exits, l).unwrap();
        let trace = forward(&m, &tokens, &sched).unwrap();
        for w in trace.active.windows(2) {
            prop_assert!(w[1].iter().all(|p| w[0].contains(p)));
        }
        for (i, &(n, a)) in trace.layer_sizes.iter().enumerate() {
            prop_assert_eq!(n, tokens.len());
            prop_assert_eq!(a, trace.active[i].len());
        }
    }

    #[test]
    fn batch_order_does_not_matter(
        seqs in prop::collection::vec(schedule_strategy(), 1..6),
        seed in 0u64..1000,
    ) {
        let l = 3;
        let m = model(l, seed);
        let batch: Vec<_> = seqs
            .into_iter()
            .map(|(_, exits, tokens)| {
                let exits = exits.into_iter().map(|e| e.min(l)).collect();
                (tokens, ExitSchedule::from_layers(exits, l).unwrap())
            })
            .collect();
        let forward_order: Vec<_> = forward_batch(&m, &batch).into_iter().map(Result::unwrap).collect();
        let mut reversed = batch.clone();
        reversed.reverse();
        let mut back: Vec<_> = forward_batch(&m, &reversed).into_iter().map(Result::unwrap).collect();
        back.reverse();
        prop_assert_eq!(forward_order, back);
    }

    #[test]
    fn reports_add_over_shards(
        lens in prop::collection::vec(1usize..12, 2..20),
        split in any::<prop::sample::Index>(),
        seed in 0u64..1000,
    ) {
        let l = 4;
        let docs: Vec<Vec<String>> = lens
            .iter()
            .enumerate()
            .map(|(i, &n)| (0..n).map(|j| format!("w{}", (i * 7 + j * 3) % 9)).collect())
            .collect();
        let vocab = Vocab::from_corpus(&Corpus::unlabeled(docs.clone()));
        let RandomTables::Consistent(table) = build_random(&vocab, 2, l, seed, true).unwrap() else {
            unreachable!()
        };
        let scheds: Vec<ExitSchedule> = docs
            .iter()
            .map(|d| {
                hashee_core::model::schedule(&vocab.encode(d), &table, l, &Default::default()).unwrap()
            })
            .collect();
        let dims = ModelDims::new(8, 2, 16);
        let base = BaselineSpec { num_layers: l, dims };
        let k = 1 + split.index(scheds.len() - 1);
        let whole = report(&dims, l, &scheds, &base).unwrap();
        let parts = report(&dims, l, &scheds[..k], &base)
            .unwrap()
            .merge(&report(&dims, l, &scheds[k..], &base).unwrap())
            .unwrap();
        prop_assert_eq!(&whole, &parts);
        let saved: u64 = whole.layers.iter().map(|t| t.saved_macs).sum();
        prop_assert_eq!(whole.model_macs + saved, whole.baseline_macs);
    }

    #[test]
    fn frequency_tables_round_trip(text in "[a-e ]{1,40}(\n[a-e ]{1,40}){0,6}", b in 1usize..4) {
        let corpus = parse_corpus(&text, false).unwrap();
        prop_assume!(!corpus.is_empty());
        let vocab = Vocab::from_corpus(&corpus);
        let stats = CorpusStats::from_corpus(&corpus, &vocab);
        let t = build_frequency(&vocab, &stats, b, 4).unwrap();
        let back = parse_table(&t.to_text()).unwrap();
        prop_assert_eq!(&back, &t);
        prop_assert_eq!(back.to_text(), t.to_text());
    }

    #[test]
    fn models_round_trip(layers in 1usize..3, seed in 0u64..1000) {
        let m = model(layers, seed);
        let back = parse_model(&m.to_text()).unwrap();
        prop_assert_eq!(back, m);
    }
}
