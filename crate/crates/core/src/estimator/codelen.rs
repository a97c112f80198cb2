//! Huffman code lengths computed in place over sorted frequencies, without
//! materializing a tree.

use serde::{Deserialize, Serialize};

use crate::codec::BinHistogram;
use crate::error::{Error, Result};

/// Minimum-redundancy code lengths for weights sorted ascending, computed in
/// place (Moffat and Katajainen). On return `w[i]` holds the length of the
/// `i`-th weight. Ties between a leaf and an internal node go to the leaf.
pub fn in_place_lengths(w: &mut [u64]) {
    let n = w.len();
    match n {
        0 => return,
        1 => {
            w[0] = 1;
            return;
        }
        _ => {}
    }
    debug_assert!(w.windows(2).all(|p| p[0] <= p[1]));

    // phase 1: internal node weights, leaving parent pointers behind
    w[0] += w[1];
    let (mut root, mut leaf) = (0usize, 2usize);
    for next in 1..n - 1 {
        if leaf >= n || w[root] < w[leaf] {
            w[next] = w[root];
            w[root] = next as u64;
            root += 1;
        } else {
            w[next] = w[leaf];
            leaf += 1;
        }
        if leaf >= n || (root < next && w[root] < w[leaf]) {
            w[next] += w[root];
            w[root] = next as u64;
            root += 1;
        } else {
            w[next] += w[leaf];
            leaf += 1;
        }
    }

    // phase 2: internal node depths
    w[n - 2] = 0;
    for next in (0..n - 2).rev() {
        w[next] = w[w[next] as usize] + 1;
    }

    // phase 3: leaf depths
    let (mut avail, mut used, mut depth) = (1i64, 0i64, 0u64);
    let mut root = n as isize - 2;
    let mut next = n as isize - 1;
    while avail > 0 {
        while root >= 0 && w[root as usize] == depth {
            used += 1;
            root -= 1;
        }
        while avail > used {
            w[next as usize] = depth;
            next -= 1;
            avail -= 1;
        }
        avail = 2 * used;
        depth += 1;
        used = 0;
    }
}

/// Per-symbol code lengths for a histogram without building a tree.
/// Symbols are ordered by `(count, symbol)` before the in-place pass.
pub fn symbol_lengths_no_tree(hist: &BinHistogram) -> Result<Vec<(u32, u8)>> {
    let mut sym: Vec<(u64, u32)> = hist.nonzero().map(|(s, c)| (c, s)).collect();
    if sym.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    sym.sort_unstable();
    let mut w: Vec<u64> = sym.iter().map(|&(c, _)| c).collect();
    in_place_lengths(&mut w);
    sym.iter()
        .zip(&w)
        .map(|(&(_, s), &l)| {
            if l > 64 {
                Err(Error::CodeTooLong(l as usize))
            } else {
                Ok((s, l as u8))
            }
        })
        .collect()
}

/// Probability mass of each code length, weighted by symbol frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodeLengthDist {
    /// `probs[j]` = P(code length == j); index 0 is always 0.
    pub probs: Vec<f64>,
    pub mean_len: f64,
}

impl CodeLengthDist {
    pub fn from_lengths(hist: &BinHistogram, lengths: &[(u32, u8)]) -> Result<Self> {
        let total = hist.total();
        if total == 0 {
            return Err(Error::EmptyHistogram);
        }
        let max = lengths.iter().map(|&(_, l)| l as usize).max().unwrap_or(0);
        let mut mass = vec![0u64; max + 1];
        for &(s, l) in lengths {
            mass[l as usize] += hist.get(s);
        }
        let probs: Vec<f64> = mass.iter().map(|&m| m as f64 / total as f64).collect();
        let mean_len = probs.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
        Ok(Self { probs, mean_len })
    }

    /// Builds a distribution from raw length probabilities (normalized here).
    pub fn from_probs(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::InvalidConfig("length probabilities must be finite and >= 0".into()));
        }
        probs[0] = 0.0;
        let s: f64 = probs.iter().sum();
        if s <= 0.0 {
            return Err(Error::EmptyHistogram);
        }
        probs.iter_mut().for_each(|p| *p /= s);
        let mean_len = probs.iter().enumerate().map(|(j, p)| j as f64 * p).sum();
        Ok(Self { probs, mean_len })
    }

    pub fn p(&self, len: usize) -> f64 {
        self.probs.get(len).copied().unwrap_or(0.0)
    }

    /// P(X <= len).
    pub fn cdf(&self, len: usize) -> f64 {
        self.probs.iter().take(len + 1).sum()
    }

    pub fn max_len(&self) -> usize {
        self.probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }
}

/// Tree-free Huffman code-length distribution of a histogram.
pub fn code_lengths_no_tree(hist: &BinHistogram) -> Result<CodeLengthDist> {
    let lengths = symbol_lengths_no_tree(hist)?;
    CodeLengthDist::from_lengths(hist, &lengths)
}
