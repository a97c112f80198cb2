//! Code lengths against a two-queue Huffman oracle, and bitstream round trips.

use std::collections::VecDeque;

use proptest::prelude::*;

use ctm_core::codec::{build_codebook, count_frequencies, decode, encode, huffman_lengths, BinHistogram, Codebook};
use ctm_core::estimator::symbol_lengths_no_tree;

/// Optimal weighted code length via the two-queue merge over sorted weights.
/// Lengths are not unique under ties, the optimal cost is.
fn oracle_cost(weights: &[u64]) -> u64 {
    let mut leaves: VecDeque<u64> = {
        let mut w: Vec<u64> = weights.iter().copied().filter(|&w| w > 0).collect();
        w.sort_unstable();
        w.into()
    };
    if leaves.len() == 1 {
        return leaves[0];
    }
    let mut merged: VecDeque<u64> = VecDeque::new();
    let mut cost = 0;
    let pop = |l: &mut VecDeque<u64>, m: &mut VecDeque<u64>| match (l.front(), m.front()) {
        (Some(&a), Some(&b)) if a <= b => l.pop_front().unwrap(),
        (Some(_), None) => l.pop_front().unwrap(),
        _ => m.pop_front().unwrap(),
    };
    while leaves.len() + merged.len() > 1 {
        let a = pop(&mut leaves, &mut merged);
        let b = pop(&mut leaves, &mut merged);
        cost += a + b;
        merged.push_back(a + b);
    }
    cost
}

fn cost(hist: &BinHistogram, lengths: &[(u32, u8)]) -> u64 {
    lengths.iter().map(|&(s, l)| hist.get(s) * l as u64).sum()
}

fn kraft(lengths: &[(u32, u8)]) -> f64 {
    lengths.iter().map(|&(_, l)| 0.5f64.powi(l as i32)).sum()
}

fn histogram() -> impl Strategy<Value = Vec<u64>> {
    prop_oneof![
        prop::collection::vec(0u64..1000, 2..300),
        prop::collection::vec(prop_oneof![Just(0u64), 1u64..4, 1_000_000u64..2_000_000], 2..300),
        (2usize..60).prop_map(|n| (0..n).map(|i| 1u64 << i.min(40)).collect()),
    ]
    .prop_filter("two live symbols", |w| w.iter().filter(|&&c| c > 0).count() >= 2)
}

proptest! {
    #[test]
    fn lengths_are_optimal_and_complete(w in histogram()) {
        let hist = BinHistogram::from_counts(w.clone());
        let want = oracle_cost(&w);
        for lengths in [huffman_lengths(&hist).unwrap(), symbol_lengths_no_tree(&hist).unwrap()] {
            prop_assert_eq!(lengths.len(), hist.nonzero_bins());
            prop_assert_eq!(cost(&hist, &lengths), want);
            prop_assert!((kraft(&lengths) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_decode_round_trip(symbols in prop::collection::vec(0u32..40, 1..2000)) {
        let hist = count_frequencies(&symbols, 40);
        let book = build_codebook(&hist).unwrap();
        let (bytes, cases) = encode(&symbols, &book).unwrap();
        prop_assert_eq!(cases.total(), symbols.len() as u64);
        prop_assert_eq!(decode(&bytes, &book, symbols.len()).unwrap(), symbols);
    }
}

#[test]
fn single_symbol_gets_one_bit() {
    let hist = BinHistogram::from_counts(vec![0, 0, 7]);
    assert_eq!(huffman_lengths(&hist).unwrap(), vec![(2, 1)]);
    assert_eq!(symbol_lengths_no_tree(&hist).unwrap(), vec![(2, 1)]);
}

#[test]
fn kraft_violation_rejected() {
    assert!(Codebook::from_lengths(&[(0, 1), (1, 1), (2, 1)]).is_err());
}

#[test]
fn truncated_stream_fails_to_decode() {
    let symbols: Vec<u32> = (0..500).map(|i| (i * 7 % 13) as u32).collect();
    let book = build_codebook(&count_frequencies(&symbols, 13)).unwrap();
    let (bytes, _) = encode(&symbols, &book).unwrap();
    assert!(decode(&bytes[..bytes.len() / 2], &book, symbols.len()).is_err());
}
