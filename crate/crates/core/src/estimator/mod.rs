//! Pre-compression characterization from a small block sample: predicted
//! code histogram, tree-free code lengths, size estimates and the
//! byte-boundary case probabilities.

pub mod cases;
pub mod codelen;
pub mod sampling;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use cases::{predict_cases, CasePrediction, CaseVariant};
pub use codelen::{code_lengths_no_tree, in_place_lengths, symbol_lengths_no_tree, CodeLengthDist};
pub use sampling::{sample_blocks, BlockLayout, Context, SampleBlock};

use crate::codec::quantize::predict_quantize_with;
use crate::codec::{BinHistogram, CompressionConfig};
use crate::data_io::ScalarField;
use crate::error::{Error, Result};

/// Bits charged per outlier literal.
pub const OUTLIER_BITS: f64 = 64.0;

/// Histogram over sampled core points, before scaling.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledHistogram {
    pub counts: Vec<u64>,
    pub points: u64,
    pub outliers: u64,
}

/// Runs prediction and quantization on each block independently and counts
/// the codes of core points only.
pub fn sample_histogram(blocks: &[SampleBlock], config: &CompressionConfig) -> Result<SampledHistogram> {
    config.validate()?;
    if blocks.is_empty() {
        return Err(Error::InsufficientData("no sample blocks".into()));
    }
    let mut counts = vec![0u64; config.num_bins()];
    let mut points = 0u64;
    let mut mask = Vec::new();
    for b in blocks {
        if b.core_len() == b.values.len() {
            predict_quantize_with(b.ctx_dims, &b.values, config, |_, c| counts[c as usize] += 1);
        } else {
            b.core_mask(&mut mask);
            predict_quantize_with(b.ctx_dims, &b.values, config, |i, c| {
                counts[c as usize] += mask[i] as u64;
            });
        }
        points += b.core_len() as u64;
    }
    let outliers = counts[0];
    Ok(SampledHistogram { counts, points, outliers })
}

/// Scales sampled counts to a total of exactly `n` with largest-remainder
/// rounding. Ties in the remainder go to the lower code.
pub fn scale_counts(counts: &[u64], n: u64) -> Vec<u64> {
    let sampled: u64 = counts.iter().sum();
    if sampled == 0 {
        return vec![0; counts.len()];
    }
    let mut out = Vec::with_capacity(counts.len());
    let mut rems = Vec::new();
    let mut assigned = 0u64;
    for (i, &c) in counts.iter().enumerate() {
        let num = c as u128 * n as u128;
        let q = (num / sampled as u128) as u64;
        let r = (num % sampled as u128) as u64;
        out.push(q);
        assigned += q;
        if r > 0 {
            rems.push((r, i));
        }
    }
    rems.sort_unstable_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, i) in rems.iter().take((n - assigned) as usize) {
        out[i] += 1;
    }
    out
}

/// Full-size histogram estimated from the blocks, summing to `n` exactly.
pub fn estimate_histogram(blocks: &[SampleBlock], config: &CompressionConfig, n: usize) -> Result<BinHistogram> {
    let s = sample_histogram(blocks, config)?;
    Ok(BinHistogram::from_counts(scale_counts(&s.counts, n as u64)))
}

/// Size estimates derived from a code-length distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeEstimate {
    /// Huffman bits per value including outlier literals.
    pub bitrate: f64,
    /// Bytes of Huffman payload.
    pub encoded_size: u64,
    /// Bytes of the whole archive with an uncompressed payload.
    pub archive_size: u64,
}

pub fn estimate_sizes(hist: &BinHistogram, lengths: &CodeLengthDist, rank: usize) -> SizeEstimate {
    let n = hist.total();
    let outliers = hist.get(0);
    let outlier_frac = if n == 0 { 0.0 } else { outliers as f64 / n as f64 };
    let encoded_size = (n as f64 * lengths.mean_len / 8.0).ceil() as u64;
    let header = 4 + 1 + 8 * rank as u64 + 1 + 8 + 4 + 1 + 8 + 4 + 8;
    SizeEstimate {
        bitrate: lengths.mean_len + OUTLIER_BITS * outlier_frac,
        encoded_size,
        archive_size: header + 8 * outliers + 5 * hist.nonzero_bins() as u64 + encoded_size,
    }
}

/// Everything the time model consumes, computed before compression.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateBundle {
    pub n: usize,
    pub est_histogram: BinHistogram,
    pub code_lengths: CodeLengthDist,
    pub est_bitrate_huffman: f64,
    pub est_encoded_size: u64,
    pub est_archive_size: u64,
    /// Case probabilities under [`CaseVariant::DoubleSum`].
    pub case_pred: CasePrediction,
    pub outlier_frac: f64,
    pub p_max: f64,
    pub sample_points: u64,
    /// Wall-clock seconds spent characterizing.
    pub sample_cost: f64,
}

impl EstimateBundle {
    pub fn cases(&self, variant: CaseVariant) -> CasePrediction {
        predict_cases(&self.code_lengths, variant)
    }
}

/// Samples the field at `config.sample_rate` and derives every estimate.
pub fn characterize(field: &ScalarField, config: &CompressionConfig, seed: u64) -> Result<EstimateBundle> {
    let start = Instant::now();
    config.validate()?;
    let layout = BlockLayout::for_predictor(config.predictor, field.rank());
    let blocks = sample_blocks(field, config.sample_rate, seed, layout)?;
    let sampled = sample_histogram(&blocks, config)?;
    drop(blocks);
    let n = field.len();
    let hist = BinHistogram::from_counts(scale_counts(&sampled.counts, n as u64));
    // lengths from the sample itself; scaling only perturbs ties
    let code_lengths = code_lengths_no_tree(&BinHistogram::from_counts(sampled.counts.clone()))?;
    let sizes = estimate_sizes(&hist, &code_lengths, field.rank());
    let pts = sampled.points as f64;
    let bundle = EstimateBundle {
        n,
        case_pred: predict_cases(&code_lengths, CaseVariant::DoubleSum),
        est_bitrate_huffman: sizes.bitrate,
        est_encoded_size: sizes.encoded_size,
        est_archive_size: sizes.archive_size,
        outlier_frac: sampled.outliers as f64 / pts,
        p_max: sampled.counts.iter().copied().max().unwrap_or(0) as f64 / pts,
        sample_points: sampled.points,
        est_histogram: hist,
        code_lengths,
        sample_cost: 0.0,
    };
    Ok(EstimateBundle {
        sample_cost: start.elapsed().as_secs_f64(),
        ..bundle
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{compress, Predictor};
    use crate::data_io::{synth_field, SynthKind};

    #[test]
    fn largest_remainder_sums_exactly() {
        let s = scale_counts(&[1, 1, 1], 10);
        assert_eq!(s.iter().sum::<u64>(), 10);
        assert_eq!(s, vec![4, 3, 3]);
        let s = scale_counts(&[7, 0, 13, 1], 1_000_003);
        assert_eq!(s.iter().sum::<u64>(), 1_000_003);
        assert_eq!(s[1], 0);
    }

    #[test]
    fn constant_field_bundle() {
        let f = synth_field(SynthKind::Constant, &[32, 32, 32], 0).unwrap();
        for p in Predictor::ALL {
            let cfg = CompressionConfig::new(p, 1e-3);
            let b = characterize(&f, &cfg, 3).unwrap();
            assert_eq!(b.outlier_frac, 0.0);
            assert_eq!(b.est_histogram.total(), f.len() as u64);
            assert!(b.p_max > 0.99, "{p}: {}", b.p_max);
            assert!((b.est_bitrate_huffman - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn uniform_256_sizes() {
        let hist = BinHistogram::from_counts(vec![0].into_iter().chain(std::iter::repeat_n(4, 256)).collect());
        let d = code_lengths_no_tree(&hist).unwrap();
        let s = estimate_sizes(&hist, &d, 1);
        assert_eq!(d.mean_len, 8.0);
        assert_eq!(s.encoded_size, 1024);
    }

    #[test]
    fn full_rate_lorenzo_matches_codec_exactly() {
        // the low halo gives every core point its true causal neighbourhood
        let f = synth_field(SynthKind::Smooth, &[24, 20, 18], 5).unwrap();
        let cfg = CompressionConfig::new(Predictor::Lorenzo, 1e-3).with_sample_rate(1.0);
        let layout = BlockLayout::for_predictor(Predictor::Lorenzo, 3);
        let blocks = sample_blocks(&f, 1.0, 0, layout).unwrap();
        let est = estimate_histogram(&blocks, &cfg, f.len()).unwrap();
        let (_, _, m) = compress(&f, &cfg).unwrap();
        assert!(est.tv_distance(&m.histogram) < 0.01, "{}", est.tv_distance(&m.histogram));
    }
}
