//! Linear-scaling quantization of prediction residuals.

use super::predictor::{interp_traverse, lorenzo_traverse};
use super::{CompressionConfig, Predictor};

/// Integer quantizer with bin width `2 * eb` centred on the prediction.
///
/// Code 0 marks an outlier; valid codes lie in `[1, 2 * radius - 1]` with
/// `radius` meaning "residual quantized to zero".
#[derive(Debug, Clone, Copy)]
pub struct Quantizer {
    eb: f64,
    two_eb: f64,
    inv_two_eb: f64,
    radius: u32,
    radius_f: f64,
}

impl Quantizer {
    pub fn new(eb: f64, radius: u32) -> Self {
        Self {
            eb,
            two_eb: 2.0 * eb,
            inv_two_eb: 1.0 / (2.0 * eb),
            radius,
            radius_f: radius as f64,
        }
    }

    /// Quantizes `value` against `pred`, returning `(code, reconstruction)`.
    /// Unquantizable residuals, or ones whose reconstruction would violate the
    /// bound in floating point, become outliers reconstructed exactly.
    #[inline]
    pub fn quantize(&self, value: f64, pred: f64) -> (u32, f64) {
        let q = ((value - pred) * self.inv_two_eb).round();
        if q.abs() < self.radius_f {
            let recon = pred + q * self.two_eb;
            if (recon - value).abs() <= self.eb {
                return ((self.radius as i64 + q as i64) as u32, recon);
            }
        }
        (0, value)
    }

    /// Inverse of [`Quantizer::quantize`] for non-outlier codes.
    #[inline]
    pub fn dequantize(&self, code: u32, pred: f64) -> f64 {
        let q = (code as i64 - self.radius as i64) as f64;
        pred + q * self.two_eb
    }
}

/// Quantization codes in traversal order plus the literal outlier values.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantOutcome {
    pub codes: Vec<u32>,
    pub outliers: Vec<f64>,
}

impl QuantOutcome {
    pub fn outlier_count(&self) -> usize {
        self.outliers.len()
    }
}

/// Runs the configured predictor over a row-major grid and feeds every
/// `(linear index, code)` pair to `sink` in traversal order.
pub(crate) fn predict_quantize_with(
    dims: [usize; 3],
    values: &[f64],
    config: &CompressionConfig,
    mut sink: impl FnMut(usize, u32),
) -> Vec<f64> {
    let q = Quantizer::new(config.eb, config.quant_radius);
    let mut outliers = Vec::new();
    let visit = |idx: usize, pred: f64| {
        let (code, recon) = q.quantize(values[idx], pred);
        if code == 0 {
            outliers.push(values[idx]);
        }
        sink(idx, code);
        recon
    };
    match config.predictor {
        Predictor::Lorenzo => lorenzo_traverse(dims, visit),
        Predictor::Interpolation => interp_traverse(dims, visit),
    }
    outliers
}

/// Prediction plus quantization over a whole grid; codes are stored in
/// traversal order so decompression can consume them sequentially.
pub fn predict_quantize_grid(dims: [usize; 3], values: &[f64], config: &CompressionConfig) -> QuantOutcome {
    let mut codes = Vec::with_capacity(values.len());
    let outliers = predict_quantize_with(dims, values, config, |_, c| codes.push(c));
    QuantOutcome { codes, outliers }
}

/// Rebuilds values from codes and outliers; inverse of [`predict_quantize_grid`].
pub(crate) fn reconstruct_grid(
    dims: [usize; 3],
    config: &CompressionConfig,
    codes: &[u32],
    outliers: &[f64],
) -> Result<Vec<f64>, String> {
    let n: usize = dims.iter().product();
    if codes.len() != n {
        return Err(format!("expected {n} codes, found {}", codes.len()));
    }
    let q = Quantizer::new(config.eb, config.quant_radius);
    let mut out = vec![0.0; n];
    let mut next_code = codes.iter();
    let mut next_outlier = outliers.iter();
    let mut missing = false;
    let mut visit = |_: usize, pred: f64| {
        let code = *next_code.next().expect("length checked");
        if code == 0 {
            match next_outlier.next() {
                Some(&v) => v,
                None => {
                    missing = true;
                    0.0
                }
            }
        } else {
            q.dequantize(code, pred)
        }
    };
    match config.predictor {
        Predictor::Lorenzo => {
            let mut k = 0usize;
            lorenzo_traverse(dims, |idx, pred| {
                let v = visit(idx, pred);
                out[k] = v;
                k += 1;
                v
            });
        }
        Predictor::Interpolation => interp_traverse(dims, |idx, pred| {
            let v = visit(idx, pred);
            out[idx] = v;
            v
        }),
    }
    if missing {
        return Err("outlier block shorter than the number of outlier codes".into());
    }
    if next_outlier.next().is_some() {
        return Err("outlier block longer than the number of outlier codes".into());
    }
    Ok(out)
}
