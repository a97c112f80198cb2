//! Four-stage prediction-based error-bounded compressor.
//!
//! Stages, each timed on its own: prediction + quantization, frequency
//! counting + codebook construction, Huffman encoding, lossless back-end.

mod archive;
pub mod huffman;
pub mod lossless;
pub mod predictor;
pub mod quantize;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use archive::{Archive, MAGIC};
pub use huffman::{
    build_codebook, count_frequencies, decode, encode, huffman_lengths, BinHistogram, CaseCounts,
    Codebook,
};
pub use lossless::{lossless_decode, lossless_encode};
pub use quantize::{predict_quantize_grid, QuantOutcome, Quantizer};

use crate::data_io::ScalarField;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Predictor {
    Lorenzo = 0,
    Interpolation = 1,
}

impl Predictor {
    pub const ALL: [Predictor; 2] = [Predictor::Lorenzo, Predictor::Interpolation];

    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Predictor::Lorenzo),
            1 => Some(Predictor::Interpolation),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Predictor::Lorenzo => "lorenzo",
            Predictor::Interpolation => "interpolation",
        }
    }
}

impl fmt::Display for Predictor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Predictor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "lorenzo" => Ok(Predictor::Lorenzo),
            "interpolation" | "interp" => Ok(Predictor::Interpolation),
            other => Err(Error::InvalidConfig(format!("unknown predictor {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
#[repr(u8)]
pub enum Lossless {
    None = 0,
    Rle = 1,
    Lz = 2,
}

impl Lossless {
    pub fn from_u8(b: u8) -> Option<Self> {
        match b {
            0 => Some(Lossless::None),
            1 => Some(Lossless::Rle),
            2 => Some(Lossless::Lz),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Lossless::None => "none",
            Lossless::Rle => "rle",
            Lossless::Lz => "lz",
        }
    }
}

impl fmt::Display for Lossless {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Lossless {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "none" => Ok(Lossless::None),
            "rle" => Ok(Lossless::Rle),
            "lz" => Ok(Lossless::Lz),
            other => Err(Error::InvalidConfig(format!("unknown lossless back-end {other:?}"))),
        }
    }
}

pub const DEFAULT_QUANT_RADIUS: u32 = 32_768;
pub const DEFAULT_SAMPLE_RATE: f64 = 0.04;
const MAX_QUANT_RADIUS: u32 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompressionConfig {
    pub predictor: Predictor,
    /// Absolute point-wise error bound.
    pub eb: f64,
    /// Half-width of the quantization code range.
    pub quant_radius: u32,
    pub lossless: Lossless,
    /// Fraction of the field the estimator samples.
    pub sample_rate: f64,
}

impl Default for CompressionConfig {
    fn default() -> Self {
        Self {
            predictor: Predictor::Lorenzo,
            eb: 1e-3,
            quant_radius: DEFAULT_QUANT_RADIUS,
            lossless: Lossless::Lz,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

impl CompressionConfig {
    pub fn new(predictor: Predictor, eb: f64) -> Self {
        Self {
            predictor,
            eb,
            ..Self::default()
        }
    }

    pub fn with_eb(self, eb: f64) -> Self {
        Self { eb, ..self }
    }

    pub fn with_predictor(self, predictor: Predictor) -> Self {
        Self { predictor, ..self }
    }

    pub fn with_lossless(self, lossless: Lossless) -> Self {
        Self { lossless, ..self }
    }

    pub fn with_sample_rate(self, sample_rate: f64) -> Self {
        Self { sample_rate, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eb > 0.0 && self.eb.is_finite()) {
            return Err(Error::InvalidConfig(format!("error bound must be positive, got {}", self.eb)));
        }
        if !(2..=MAX_QUANT_RADIUS).contains(&self.quant_radius) {
            return Err(Error::InvalidConfig(format!(
                "quant radius must be in [2, {MAX_QUANT_RADIUS}], got {}",
                self.quant_radius
            )));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "sample rate must be in (0, 1], got {}",
                self.sample_rate
            )));
        }
        Ok(())
    }

    /// Number of histogram bins, `2 * quant_radius + 1`.
    pub fn num_bins(&self) -> usize {
        2 * self.quant_radius as usize + 1
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub t_pq: f64,
    pub t_freq_book: f64,
    pub t_encode: f64,
    pub t_lossless: f64,
    /// End-to-end including glue between stages.
    pub t_total: f64,
}

impl StageTiming {
    pub fn stages(&self) -> [f64; 4] {
        [self.t_pq, self.t_freq_book, self.t_encode, self.t_lossless]
    }

    pub fn stage_sum(&self) -> f64 {
        self.stages().iter().sum()
    }

    /// Per-stage median over several runs (each stage independently).
    pub fn median_of(runs: &[StageTiming]) -> Option<StageTiming> {
        use crate::num::median;
        let col = |f: fn(&StageTiming) -> f64| median(&runs.iter().map(f).collect::<Vec<_>>());
        Some(StageTiming {
            t_pq: col(|t| t.t_pq)?,
            t_freq_book: col(|t| t.t_freq_book)?,
            t_encode: col(|t| t.t_encode)?,
            t_lossless: col(|t| t.t_lossless)?,
            t_total: col(|t| t.t_total)?,
        })
    }
}

/// Stage outputs captured during compression.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservedMetrics {
    pub n: usize,
    pub histogram: BinHistogram,
    /// `(code, length)` in canonical order.
    pub code_lengths: Vec<(u32, u8)>,
    pub case_counts: CaseCounts,
    pub outlier_count: usize,
    /// Bytes after Huffman encoding.
    pub encoded_size: usize,
    /// Bytes after the lossless stage.
    pub lossless_size: usize,
    /// Whole archive in bytes.
    pub final_size: usize,
    /// `8 * final_size / n`.
    pub bitrate: f64,
}

impl ObservedMetrics {
    /// Compression ratio achieved by the lossless stage on the Huffman payload.
    pub fn lossless_ratio(&self) -> f64 {
        self.encoded_size as f64 / self.lossless_size.max(1) as f64
    }

    /// Huffman bits per value, outlier literals included.
    pub fn huffman_bitrate(&self) -> f64 {
        (8 * self.encoded_size + 64 * self.outlier_count) as f64 / self.n as f64
    }
}

/// Prediction and quantization over the whole field, codes in traversal order.
pub fn predict_quantize(field: &ScalarField, config: &CompressionConfig) -> QuantOutcome {
    predict_quantize_grid(field.dims3(), field.values(), config)
}

/// Runs the four stages in order, timing each with a monotonic clock.
pub fn compress(
    field: &ScalarField,
    config: &CompressionConfig,
) -> Result<(Archive, StageTiming, ObservedMetrics)> {
    config.validate()?;
    let start = Instant::now();

    let t = Instant::now();
    let QuantOutcome { codes, outliers } = predict_quantize(field, config);
    let t_pq = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let histogram = count_frequencies(&codes, config.num_bins());
    let book = build_codebook(&histogram)?;
    let t_freq_book = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let (encoded, case_counts) = encode(&codes, &book)?;
    let t_encode = t.elapsed().as_secs_f64();
    drop(codes);

    let t = Instant::now();
    let payload = lossless_encode(&encoded, config.lossless);
    let t_lossless = t.elapsed().as_secs_f64();

    let archive = Archive {
        dims: field.dims().to_vec(),
        predictor: config.predictor,
        eb: config.eb,
        quant_radius: config.quant_radius,
        lossless: config.lossless,
        outliers,
        codebook: book.lengths().to_vec(),
        payload,
    };
    let t_total = start.elapsed().as_secs_f64();

    let n = field.len();
    let final_size = archive.byte_len();
    let metrics = ObservedMetrics {
        n,
        histogram,
        code_lengths: book.lengths().to_vec(),
        case_counts,
        outlier_count: archive.outliers.len(),
        encoded_size: encoded.len(),
        lossless_size: archive.payload.len(),
        final_size,
        bitrate: 8.0 * final_size as f64 / n as f64,
    };
    let timing = StageTiming {
        t_pq,
        t_freq_book,
        t_encode,
        t_lossless,
        t_total,
    };
    Ok((archive, timing, metrics))
}

pub fn decompress(archive: &Archive) -> Result<ScalarField> {
    let config = CompressionConfig {
        predictor: archive.predictor,
        eb: archive.eb,
        quant_radius: archive.quant_radius,
        lossless: archive.lossless,
        sample_rate: 1.0,
    };
    crate::data_io::validate_dims(&archive.dims).map_err(|_| Error::Corrupt("bad dims".into()))?;
    let n: usize = archive.dims.iter().product();
    let book = Codebook::from_lengths(&archive.codebook)?;
    let encoded = lossless_decode(&archive.payload, archive.lossless)?;
    let codes = decode(&encoded, &book, n)?;
    let values = quantize::reconstruct_grid(crate::data_io::dims3(&archive.dims), &config, &codes, &archive.outliers)
        .map_err(Error::Corrupt)?;
    ScalarField::new("decompressed", archive.dims.clone(), values)
}

/// Parses and decompresses a serialized archive.
pub fn decompress_bytes(bytes: &[u8]) -> Result<ScalarField> {
    decompress(&Archive::from_bytes(bytes)?)
}
