//! Per-stage time surrogates and their composition into a total prediction.

mod curve;
mod linear;
mod piecewise;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

pub use curve::{fit_curve, fit_monotone_curve, CurveSurrogate, DEFAULT_WINDOW};
pub use linear::{fit_linear, fit_linear_nonneg, fit_through_origin, fit_through_origin_nonneg, LinearSurrogate};
pub use piecewise::{fit_piecewise, PiecewiseThroughput, Segment};

use crate::codec::{CompressionConfig, Lossless, Predictor};
use crate::estimator::{CaseVariant, EstimateBundle};
use crate::error::{Error, Result};

pub const STAGE1_FEATURES: [&str; 4] = ["n", "n_outlier", "n_non_modal", "n_bits"];

/// Stage-1 features `[N, N·outlier_frac, N·(1 − p_max), N·bitrate]`.
pub fn features_stage1(bundle: &EstimateBundle, n: usize) -> [f64; 4] {
    let n = n as f64;
    [
        n,
        n * bundle.outlier_frac,
        n * (1.0 - bundle.p_max),
        n * bundle.est_bitrate_huffman,
    ]
}

/// Case-count weights below the bitrate threshold, ratio curve above it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage3Model {
    /// Seconds per case-1, case-2 and case-3 write.
    pub weights: [f64; 3],
    /// Bitrate threshold between the two regimes.
    pub tau: f64,
    /// Multiplier on the case-count prediction above `tau`; equals 1 at `tau`.
    pub ratio: CurveSurrogate<f64>,
}

impl Stage3Model {
    pub fn validate(&self) -> Result<()> {
        if !self.weights.iter().chain([&self.tau]).all(|w| w.is_finite()) {
            return Err(Error::ModelFormat("non-finite stage-3 parameter".into()));
        }
        self.ratio.validate()
    }

    /// Case-count estimate `w · (N p1, N p2, N p3)`.
    pub fn linear_part(&self, p: [f64; 3], n: usize) -> f64 {
        let n = n as f64;
        self.weights.iter().zip(p).map(|(w, pk)| w * n * pk).sum()
    }
}

/// Stage-4 throughput together with the lossless-ratio lookup keyed by
/// estimated Huffman bitrate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Stage4Params", try_from = "Stage4Params")]
pub struct Stage4Model {
    pub throughput: PiecewiseThroughput<f64>,
    pub ratio_lookup: CurveSurrogate<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stage4Params {
    breakpoints: Vec<f64>,
    segments: Vec<Segment<f64>>,
    floor: f64,
    ratio_lookup: CurveSurrogate<f64>,
}

impl From<Stage4Model> for Stage4Params {
    fn from(m: Stage4Model) -> Self {
        Self {
            breakpoints: m.throughput.breakpoints,
            segments: m.throughput.segments,
            floor: m.throughput.floor,
            ratio_lookup: m.ratio_lookup,
        }
    }
}

impl TryFrom<Stage4Params> for Stage4Model {
    type Error = Error;

    fn try_from(p: Stage4Params) -> Result<Self> {
        let m = Stage4Model {
            throughput: PiecewiseThroughput {
                breakpoints: p.breakpoints,
                segments: p.segments,
                floor: p.floor,
            },
            ratio_lookup: p.ratio_lookup,
        };
        m.throughput.validate()?;
        m.ratio_lookup.validate()?;
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationMeta {
    pub fields: Vec<String>,
    pub eb_grid: Vec<f64>,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
    pub repeats: usize,
    pub sample_rate: f64,
    pub quant_radius: u32,
    pub lossless: Lossless,
    pub notes: Vec<String>,
}

/// Fitted surrogates for all four stages. Stages 1 to 3 are fitted per
/// predictor; stage 4 only sees the Huffman payload and is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeModel {
    pub machine: String,
    pub case_variant: CaseVariant,
    pub s1: BTreeMap<Predictor, LinearSurrogate<f64>>,
    pub s2: BTreeMap<Predictor, CurveSurrogate<f64>>,
    pub s3: BTreeMap<Predictor, Stage3Model>,
    pub s4: Stage4Model,
    pub calibration: CalibrationMeta,
}

impl TimeModel {
    pub fn predictors(&self) -> Vec<Predictor> {
        Predictor::ALL.into_iter().filter(|p| self.supports(*p)).collect()
    }

    pub fn supports(&self, p: Predictor) -> bool {
        self.s1.contains_key(&p) && self.s2.contains_key(&p) && self.s3.contains_key(&p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.machine.is_empty() || self.calibration.fields.is_empty() {
            return Err(Error::ModelFormat("model metadata is empty".into()));
        }
        if self.predictors().is_empty() {
            return Err(Error::ModelFormat("model has no fitted predictor".into()));
        }
        for s in self.s1.values() {
            s.validate()?;
            if s.weights.len() != STAGE1_FEATURES.len() + 1 {
                return Err(Error::ModelFormat("stage-1 feature count".into()));
            }
        }
        self.s2.values().try_for_each(|c| c.validate())?;
        self.s3.values().try_for_each(|s| s.validate())?;
        self.s4.throughput.validate()?;
        self.s4.ratio_lookup.validate()
    }

    fn check_config(&self, config: &CompressionConfig) -> Result<()> {
        let cal = &self.calibration;
        if config.quant_radius != cal.quant_radius {
            return Err(Error::MismatchedConfig(format!(
                "quant radius {} but model calibrated at {}",
                config.quant_radius, cal.quant_radius
            )));
        }
        if config.lossless != cal.lossless {
            return Err(Error::MismatchedConfig(format!(
                "lossless back-end {} but model calibrated with {}",
                config.lossless, cal.lossless
            )));
        }
        if !self.supports(config.predictor) {
            return Err(Error::Unfitted(format!("predictor {}", config.predictor)));
        }
        Ok(())
    }
}

/// Stage-3 seconds: case-count model up to `tau`, scaled by the ratio curve above.
pub fn predict_stage3(bundle: &EstimateBundle, n: usize, model: &TimeModel, predictor: Predictor) -> Result<f64> {
    let s3 = model
        .s3
        .get(&predictor)
        .ok_or_else(|| Error::Unfitted(format!("stage 3 for {predictor}")))?;
    let p = bundle.cases(model.case_variant).as_array();
    let base = s3.linear_part(p, n);
    let b = bundle.est_bitrate_huffman;
    let t = if b <= s3.tau { base } else { base * s3.ratio.eval(b) };
    Ok(t.max(0.0))
}

/// Predicted seconds per stage and in total, with a confidence interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub t1: f64,
    pub t2: f64,
    pub t3: f64,
    pub t4: f64,
    pub t_total: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub eb: f64,
    pub predictor: Predictor,
    pub est_bitrate: f64,
    pub sample_cost: f64,
}

impl PredictionReport {
    pub fn stages(&self) -> [f64; 4] {
        [self.t1, self.t2, self.t3, self.t4]
    }

    /// Sets the interval, widening it if needed so it brackets `t_total`.
    pub fn with_ci(self, low: f64, high: f64) -> Self {
        Self {
            ci_low: low.min(self.t_total),
            ci_high: high.max(self.t_total),
            ..self
        }
    }
}

impl fmt::Display for PredictionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "t1={:?} t2={:?} t3={:?} t4={:?} t_total={:?} ci_low={:?} ci_high={:?} sample_cost={:?} n={} eb={:?} predictor={} est_bitrate={:?}",
            self.t1,
            self.t2,
            self.t3,
            self.t4,
            self.t_total,
            self.ci_low,
            self.ci_high,
            self.sample_cost,
            self.n,
            self.eb,
            self.predictor,
            self.est_bitrate
        )
    }
}

/// Composes the four stage predictions. The interval is left degenerate at
/// `t_total`; attach one with [`crate::uncertainty::UncertaintyModel`].
pub fn predict_total(bundle: &EstimateBundle, config: &CompressionConfig, model: &TimeModel) -> Result<PredictionReport> {
    model.check_config(config)?;
    let p = config.predictor;
    let n = bundle.n;
    let b = bundle.est_bitrate_huffman;
    let t1 = model.s1[&p].predict(&features_stage1(bundle, n)).max(0.0);
    let t2 = (n as f64 * model.s2[&p].eval(b)).max(0.0);
    let t3 = predict_stage3(bundle, n, model, p)?;
    let ratio = model.s4.ratio_lookup.eval(b);
    let t4 = (bundle.est_encoded_size as f64 / model.s4.throughput.eval(ratio)).max(0.0);
    let t_total = t1 + t2 + t3 + t4;
    Ok(PredictionReport {
        t1,
        t2,
        t3,
        t4,
        t_total,
        ci_low: t_total,
        ci_high: t_total,
        n,
        eb: config.eb,
        predictor: p,
        est_bitrate: b,
        sample_cost: bundle.sample_cost,
    })
}
