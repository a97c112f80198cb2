//! Frequency counting, canonical Huffman codebooks and the bit-level encoder.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Occurrence counts indexed by quantization code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinHistogram {
    counts: Vec<u64>,
    total: u64,
}

impl BinHistogram {
    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        Self { counts, total }
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn get(&self, code: u32) -> u64 {
        self.counts.get(code as usize).copied().unwrap_or(0)
    }

    /// `(code, count)` for every nonzero bin, ascending by code.
    pub fn nonzero(&self) -> impl Iterator<Item = (u32, u64)> + '_ {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(i, &c)| (i as u32, c))
    }

    pub fn nonzero_bins(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    pub fn max_count(&self) -> u64 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    /// Half the L1 distance between the normalized histograms.
    pub fn tv_distance(&self, other: &BinHistogram) -> f64 {
        if self.total == 0 || other.total == 0 {
            return if self.total == other.total { 0.0 } else { 1.0 };
        }
        let (ta, tb) = (self.total as f64, other.total as f64);
        let len = self.counts.len().max(other.counts.len());
        let l1: f64 = (0..len)
            .map(|i| {
                let a = self.counts.get(i).copied().unwrap_or(0) as f64 / ta;
                let b = other.counts.get(i).copied().unwrap_or(0) as f64 / tb;
                (a - b).abs()
            })
            .sum();
        0.5 * l1
    }
}

/// Exact per-code counts. `num_bins` sizes the table up front; larger codes grow it.
pub fn count_frequencies(codes: &[u32], num_bins: usize) -> BinHistogram {
    let mut counts = vec![0u64; num_bins.max(1)];
    for &c in codes {
        let c = c as usize;
        if c >= counts.len() {
            counts.resize(c + 1, 0);
        }
        counts[c] += 1;
    }
    BinHistogram {
        counts,
        total: codes.len() as u64,
    }
}

/// Canonical Huffman codebook.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Codebook {
    /// `(symbol, length)` in canonical order: ascending length, ties by symbol.
    canonical: Vec<(u32, u8)>,
    /// Dense lookup by symbol: `(code value, length)`; length 0 = absent.
    table: Vec<(u64, u8)>,
}

impl Codebook {
    /// Assigns canonical code values to the given `(symbol, length)` pairs.
    pub fn from_lengths(lengths: &[(u32, u8)]) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::EmptyHistogram);
        }
        let mut canonical = lengths.to_vec();
        canonical.sort_unstable_by_key(|&(s, l)| (l, s));
        if let Some(&(_, l)) = canonical.iter().find(|&&(_, l)| l == 0 || l > 64) {
            return Err(Error::CodeTooLong(l as usize));
        }
        let max_sym = canonical.iter().map(|&(s, _)| s).max().unwrap() as usize;
        let mut table = vec![(0u64, 0u8); max_sym + 1];
        let mut code: u64 = 0;
        let mut prev_len = canonical[0].1;
        let mut kraft = 0.0f64;
        for (i, &(sym, len)) in canonical.iter().enumerate() {
            if i > 0 {
                code = code
                    .checked_add(1)
                    .and_then(|c| c.checked_shl((len - prev_len) as u32))
                    .ok_or(Error::CodeTooLong(len as usize))?;
            }
            if len < 64 && code >> len != 0 {
                return Err(Error::Corrupt("code lengths violate the Kraft inequality".into()));
            }
            if table[sym as usize].1 != 0 {
                return Err(Error::Corrupt(format!("duplicate symbol {sym}")));
            }
            table[sym as usize] = (code, len);
            prev_len = len;
            kraft += (-(len as f64)).exp2();
        }
        debug_assert!(kraft <= 1.0 + 1e-12);
        Ok(Self { canonical, table })
    }

    /// `(symbol, length)` pairs in canonical order.
    pub fn lengths(&self) -> &[(u32, u8)] {
        &self.canonical
    }

    pub fn len(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }

    /// `(code value, length)` for a symbol.
    pub fn code(&self, symbol: u32) -> Option<(u64, u8)> {
        match self.table.get(symbol as usize) {
            Some(&(c, l)) if l > 0 => Some((c, l)),
            _ => None,
        }
    }

    pub fn kraft_sum(&self) -> f64 {
        self.canonical.iter().map(|&(_, l)| (-(l as f64)).exp2()).sum()
    }

    /// Σ count·length over the histogram.
    pub fn weighted_length(&self, hist: &BinHistogram) -> u64 {
        self.canonical
            .iter()
            .map(|&(s, l)| hist.get(s) * l as u64)
            .sum()
    }
}

/// Optimal code lengths via a heap-built Huffman tree.
///
/// Leaves enter in `(count, symbol)` order; on equal weight a leaf is merged
/// before an internal node and internal nodes merge in creation order. A
/// histogram with one nonzero bin gets a single code of length 1.
pub fn huffman_lengths(hist: &BinHistogram) -> Result<Vec<(u32, u8)>> {
    let mut leaves: Vec<(u64, u32)> = hist.nonzero().map(|(s, c)| (c, s)).collect();
    match leaves.len() {
        0 => return Err(Error::EmptyHistogram),
        1 => return Ok(vec![(leaves[0].1, 1)]),
        _ => {}
    }
    leaves.sort_unstable();
    let n = leaves.len();
    // parent[i] for leaves 0..n and internal nodes n..2n-1
    let mut parent = vec![usize::MAX; 2 * n - 1];
    let mut heap: BinaryHeap<Reverse<(u64, u8, usize)>> = leaves
        .iter()
        .enumerate()
        .map(|(i, &(w, _))| Reverse((w, 0u8, i)))
        .collect();
    let mut next = n;
    while heap.len() > 1 {
        let Reverse((wa, _, a)) = heap.pop().unwrap();
        let Reverse((wb, _, b)) = heap.pop().unwrap();
        parent[a] = next;
        parent[b] = next;
        heap.push(Reverse((wa + wb, 1, next)));
        next += 1;
    }
    // internal nodes are created after their children, so walk downwards from the root
    let mut depth = vec![0usize; 2 * n - 1];
    for node in (0..2 * n - 2).rev() {
        depth[node] = depth[parent[node]] + 1;
    }
    leaves
        .iter()
        .enumerate()
        .map(|(i, &(_, sym))| {
            let d = depth[i];
            if d > 64 {
                Err(Error::CodeTooLong(d))
            } else {
                Ok((sym, d as u8))
            }
        })
        .collect()
}

/// Huffman lengths plus canonical code assignment.
pub fn build_codebook(hist: &BinHistogram) -> Result<Codebook> {
    Codebook::from_lengths(&huffman_lengths(hist)?)
}

/// How each code write met the byte boundary.
///
/// * case 1: the current byte was partially filled and the code fit in its
///   free bits, so no new byte was started;
/// * case 2: the current byte was partially filled and the code overflowed
///   into one or more new bytes;
/// * case 3: the current byte was empty.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseCounts {
    pub n1: u64,
    pub n2: u64,
    pub n3: u64,
}

impl CaseCounts {
    pub fn total(&self) -> u64 {
        self.n1 + self.n2 + self.n3
    }

    /// Relative frequencies `(f1, f2, f3)`.
    pub fn fractions(&self) -> [f64; 3] {
        let t = self.total().max(1) as f64;
        [self.n1 as f64 / t, self.n2 as f64 / t, self.n3 as f64 / t]
    }
}

/// Concatenates canonical codes MSB-first, zero-padding the final byte.
pub fn encode(symbols: &[u32], book: &Codebook) -> Result<(Vec<u8>, CaseCounts)> {
    let mut out = Vec::with_capacity(symbols.len() / 4 + 16);
    let mut acc: u128 = 0;
    let mut fill: u32 = 0; // pending bits, always < 8 between writes
    let mut cases = [0u64; 3];
    for &sym in symbols {
        let (code, len) = match book.table.get(sym as usize) {
            Some(&(c, l)) if l > 0 => (c, l as u32),
            _ => return Err(Error::UnknownCode(sym)),
        };
        let class = if fill == 0 {
            2
        } else if len <= 8 - fill {
            0
        } else {
            1
        };
        cases[class] += 1;
        acc = (acc << len) | code as u128;
        fill += len;
        while fill >= 8 {
            fill -= 8;
            out.push((acc >> fill) as u8);
        }
        acc &= (1u128 << fill) - 1;
    }
    if fill > 0 {
        out.push((acc << (8 - fill)) as u8);
    }
    Ok((
        out,
        CaseCounts {
            n1: cases[0],
            n2: cases[1],
            n3: cases[2],
        },
    ))
}

/// Decodes exactly `count` symbols from a canonical Huffman bitstream.
pub fn decode(bytes: &[u8], book: &Codebook, count: usize) -> Result<Vec<u32>> {
    let max_len = book.canonical.last().map(|&(_, l)| l as usize).unwrap_or(0);
    // per length: first canonical code, index of first symbol, number of codes
    let mut first = vec![0u64; max_len + 2];
    let mut offset = vec![0usize; max_len + 2];
    let mut num = vec![0u64; max_len + 2];
    for &(_, l) in &book.canonical {
        num[l as usize] += 1;
    }
    let mut code = 0u64;
    let mut idx = 0usize;
    for len in 1..=max_len {
        first[len] = code;
        offset[len] = idx;
        idx += num[len] as usize;
        code = (code + num[len]) << 1;
    }
    let mut out = Vec::with_capacity(count);
    let total_bits = bytes.len() * 8;
    let mut pos = 0usize;
    while out.len() < count {
        let mut cur = 0u64;
        let mut len = 0usize;
        loop {
            if pos >= total_bits {
                return Err(Error::Corrupt("Huffman payload truncated".into()));
            }
            let bit = (bytes[pos >> 3] >> (7 - (pos & 7))) & 1;
            pos += 1;
            cur = (cur << 1) | bit as u64;
            len += 1;
            if len > max_len {
                return Err(Error::Corrupt("invalid Huffman code".into()));
            }
            if num[len] > 0 && cur >= first[len] && cur - first[len] < num[len] {
                out.push(book.canonical[offset[len] + (cur - first[len]) as usize].0);
                break;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hist(pairs: &[(u32, u64)]) -> BinHistogram {
        let max = pairs.iter().map(|p| p.0).max().unwrap_or(0) as usize;
        let mut c = vec![0; max + 1];
        for &(s, n) in pairs {
            c[s as usize] = n;
        }
        BinHistogram::from_counts(c)
    }

    #[test]
    fn counts_exact() {
        let h = count_frequencies(&[1, 1, 2], 4);
        assert_eq!(h.counts(), &[0, 2, 1, 0]);
        assert_eq!(h.total(), 3);
        let h = count_frequencies(&[5; 10], 2);
        assert_eq!(h.nonzero().collect::<Vec<_>>(), vec![(5, 10)]);
    }

    #[test]
    fn textbook_lengths() {
        let book = build_codebook(&hist(&[(0, 1), (1, 1), (2, 2)])).unwrap();
        assert_eq!(book.code(0).unwrap().1, 2);
        assert_eq!(book.code(1).unwrap().1, 2);
        assert_eq!(book.code(2).unwrap().1, 1);
        assert_eq!(book.kraft_sum(), 1.0);
    }

    #[test]
    fn single_symbol_has_length_one() {
        let book = build_codebook(&hist(&[(7, 100)])).unwrap();
        assert_eq!(book.code(7), Some((0, 1)));
    }

    #[test]
    fn empty_histogram_rejected() {
        assert!(matches!(
            build_codebook(&BinHistogram::from_counts(vec![0; 4])),
            Err(Error::EmptyHistogram)
        ));
    }

    #[test]
    fn canonical_order_and_prefix_free() {
        let book = build_codebook(&hist(&[(0, 5), (1, 9), (2, 12), (3, 13), (4, 16), (5, 45)])).unwrap();
        let codes: Vec<(u64, u8)> = book.lengths().iter().map(|&(s, _)| book.code(s).unwrap()).collect();
        for w in book.lengths().windows(2) {
            assert!((w[0].1, w[0].0) < (w[1].1, w[1].0));
        }
        for (i, &(ca, la)) in codes.iter().enumerate() {
            for (j, &(cb, lb)) in codes.iter().enumerate() {
                if i != j && la <= lb {
                    assert_ne!(cb >> (lb - la), ca, "prefix clash");
                }
            }
        }
    }

    #[test]
    fn one_short_symbol_from_fresh_is_case3() {
        let book = build_codebook(&hist(&[(3, 1)])).unwrap();
        let (bytes, cases) = encode(&[3], &book).unwrap();
        assert_eq!(bytes.len(), 1);
        assert_eq!(cases, CaseCounts { n1: 0, n2: 0, n3: 1 });
    }

    #[test]
    fn eight_bit_codes_never_case1() {
        let counts: Vec<u64> = vec![1; 256];
        let book = build_codebook(&BinHistogram::from_counts(counts)).unwrap();
        assert!(book.lengths().iter().all(|&(_, l)| l == 8));
        let syms: Vec<u32> = (0..8).collect();
        let (bytes, cases) = encode(&syms, &book).unwrap();
        assert_eq!(bytes.len(), 8);
        assert_eq!(cases.n1, 0);
        assert_eq!(cases.total(), 8);
    }

    #[test]
    fn unit_codes_cycle_through_the_byte() {
        let book = build_codebook(&hist(&[(0, 1), (1, 1)])).unwrap();
        let syms: Vec<u32> = (0..800).map(|i| i % 2).collect();
        let (bytes, cases) = encode(&syms, &book).unwrap();
        assert_eq!(bytes.len(), 100);
        assert_eq!(cases, CaseCounts { n1: 700, n2: 0, n3: 100 });
        assert_eq!(decode(&bytes, &book, 800).unwrap(), syms);
    }

    #[test]
    fn unknown_code_errors() {
        let book = build_codebook(&hist(&[(0, 1), (1, 1)])).unwrap();
        assert!(matches!(encode(&[2], &book), Err(Error::UnknownCode(2))));
    }

    #[test]
    fn truncated_stream_errors() {
        let book = build_codebook(&hist(&[(0, 1), (1, 1), (2, 2)])).unwrap();
        let (bytes, _) = encode(&[0, 1, 2, 0, 1, 2, 0, 0, 0], &book).unwrap();
        assert!(decode(&bytes[..1], &book, 9).is_err());
    }
}
