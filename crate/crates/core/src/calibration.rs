//! Offline calibration: error-bound sweeps over sample fields, surrogate and
//! uncertainty fitting, and the model file.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::codec::{compress, CompressionConfig, ObservedMetrics, Predictor, StageTiming};
use crate::data_io::{write_csv, Cell, ScalarField, Table};
use crate::estimator::{characterize, CaseVariant, EstimateBundle};
use crate::error::{Error, Result};
use crate::time_model::{
    features_stage1, fit_curve, fit_linear_nonneg, fit_monotone_curve, fit_piecewise, fit_through_origin_nonneg, predict_total, CalibrationMeta,
    CurveSurrogate, LinearSurrogate, Stage3Model, Stage4Model, TimeModel, DEFAULT_WINDOW, STAGE1_FEATURES,
};
use crate::uncertainty::{fit_gamma, fit_normal, UncertaintyModel};

pub const MODEL_VERSION: u64 = 1;
pub const MIN_REPEATS: usize = 3;
pub const DEFAULT_SYSTEM_REPEATS: usize = 30;

/// Twelve log-spaced bounds from 1e-1 down to 1e-6.
pub fn default_eb_grid() -> Vec<f64> {
    (0..12).map(|i| 10f64.powf(-1.0 - 5.0 * i as f64 / 11.0)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationPlan {
    pub fields: Vec<String>,
    /// Strictly decreasing.
    pub eb_grid: Vec<f64>,
    pub predictors: Vec<Predictor>,
    /// Compressions per cell; the per-stage median is kept.
    pub repeats: usize,
    /// Radius, back-end and sample rate shared by every cell.
    pub base: CompressionConfig,
    pub seed: u64,
    pub machine: String,
}

impl CalibrationPlan {
    pub fn new(fields: Vec<String>) -> Self {
        Self {
            fields,
            eb_grid: default_eb_grid(),
            predictors: Predictor::ALL.to_vec(),
            repeats: MIN_REPEATS,
            base: CompressionConfig::default(),
            seed: 0,
            machine: machine_label(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.fields.is_empty() {
            return Err(Error::InvalidConfig("calibration needs at least one field".into()));
        }
        if self.eb_grid.is_empty() || self.eb_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidConfig("error bounds must be positive and finite".into()));
        }
        if self.eb_grid.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidConfig("error-bound grid must be strictly decreasing".into()));
        }
        if self.predictors.is_empty() {
            return Err(Error::InvalidConfig("no predictors selected".into()));
        }
        if self.repeats < MIN_REPEATS {
            return Err(Error::InvalidConfig(format!(
                "repeats must be at least {MIN_REPEATS}, got {}",
                self.repeats
            )));
        }
        self.base.validate()
    }

    pub fn cells(&self) -> usize {
        self.fields.len() * self.eb_grid.len() * self.predictors.len()
    }
}

/// Hostname if the environment exposes one.
pub fn machine_label() -> String {
    std::env::var("HOSTNAME")
        .ok()
        .filter(|s| !s.is_empty())
        .or_else(|| std::fs::read_to_string("/etc/hostname").ok().map(|s| s.trim().to_string()))
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown-host".to_string())
}

/// One sweep cell: per-stage median timing, observed outputs and the estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationRecord {
    pub field: String,
    pub config: CompressionConfig,
    pub timing: StageTiming,
    /// `t_total` of every repeat, in run order.
    pub repeat_totals: Vec<f64>,
    pub metrics: ObservedMetrics,
    pub bundle: EstimateBundle,
}

impl CalibrationRecord {
    pub fn n(&self) -> usize {
        self.metrics.n
    }

    pub fn label(&self) -> String {
        format!("{}/{:e}/{}", self.field, self.config.eb, self.config.predictor)
    }
}

/// Measures one cell: `repeats` timed compressions plus one characterization.
pub fn run_cell(field: &ScalarField, config: &CompressionConfig, repeats: usize, seed: u64) -> Result<CalibrationRecord> {
    let mut timings = Vec::with_capacity(repeats);
    let mut metrics = None;
    for _ in 0..repeats {
        let (_, t, m) = compress(field, config)?;
        timings.push(t);
        metrics.get_or_insert(m);
    }
    let bundle = characterize(field, config, seed)?;
    Ok(CalibrationRecord {
        field: field.name().to_string(),
        config: *config,
        timing: StageTiming::median_of(&timings).ok_or_else(|| Error::InsufficientData("no repeats".into()))?,
        repeat_totals: timings.iter().map(|t| t.t_total).collect(),
        metrics: metrics.expect("repeats >= 1"),
        bundle,
    })
}

/// Runs every (field, eb, predictor) cell serially. Fields are loaded one at
/// a time through `load`; any failure aborts the sweep.
pub fn run_sweep<F>(plan: &CalibrationPlan, mut load: F) -> Result<Vec<CalibrationRecord>>
where
    F: FnMut(&str) -> Result<ScalarField>,
{
    plan.validate()?;
    let mut out = Vec::with_capacity(plan.cells());
    for name in &plan.fields {
        let field = load(name)?;
        for &eb in &plan.eb_grid {
            for &p in &plan.predictors {
                let cfg = plan.base.with_eb(eb).with_predictor(p);
                out.push(run_cell(&field, &cfg, plan.repeats, plan.seed)?);
            }
        }
    }
    Ok(out)
}

pub const RECORD_COLUMNS: [&str; 13] = [
    "field",
    "eb",
    "predictor",
    "t_pq",
    "t_fb",
    "t_enc",
    "t_ll",
    "bitrate",
    "est_bitrate",
    "n1",
    "n2",
    "n3",
    "lossless_ratio",
];

pub fn records_table(records: &[CalibrationRecord]) -> Table {
    let mut t = Table::new(RECORD_COLUMNS);
    for r in records {
        let c = r.metrics.case_counts;
        t.push(vec![
            Cell::from(r.field.as_str()),
            Cell::from(r.config.eb),
            Cell::from(r.config.predictor.as_str()),
            Cell::from(r.timing.t_pq),
            Cell::from(r.timing.t_freq_book),
            Cell::from(r.timing.t_encode),
            Cell::from(r.timing.t_lossless),
            Cell::from(r.metrics.bitrate),
            Cell::from(r.bundle.est_bitrate_huffman),
            Cell::from(c.n1),
            Cell::from(c.n2),
            Cell::from(c.n3),
            Cell::from(r.metrics.lossless_ratio()),
        ]);
    }
    t
}

pub fn write_records_csv(records: &[CalibrationRecord], path: impl AsRef<Path>) -> Result<()> {
    write_csv(&records_table(records), path)
}

/// Mean over records of the mean absolute gap between predicted and counted
/// case fractions.
pub fn case_variant_error(records: &[CalibrationRecord], variant: CaseVariant) -> f64 {
    let total: f64 = records
        .iter()
        .map(|r| {
            let pred = r.bundle.cases(variant).as_array();
            let obs = r.metrics.case_counts.fractions();
            pred.iter().zip(obs).map(|(a, b)| (a - b).abs()).sum::<f64>() / 3.0
        })
        .sum();
    total / records.len().max(1) as f64
}

/// Variant closest to the counted cases; ties go to [`CaseVariant::DoubleSum`].
pub fn select_case_variant(records: &[CalibrationRecord]) -> CaseVariant {
    let mut best = CaseVariant::DoubleSum;
    let mut best_err = case_variant_error(records, best);
    for v in CaseVariant::ALL {
        let e = case_variant_error(records, v);
        if e < best_err {
            best = v;
            best_err = e;
        }
    }
    best
}

fn window_for(count: usize) -> usize {
    let w = DEFAULT_WINDOW.min(count.max(1));
    if w.is_multiple_of(2) {
        w - 1
    } else {
        w
    }
}

fn median(xs: &[f64]) -> f64 {
    crate::num::median(xs).unwrap_or(0.0)
}

fn fit_stage1(recs: &[&CalibrationRecord]) -> Result<LinearSurrogate<f64>> {
    // fitted per element, then rewritten over the raw features
    let x: Vec<Vec<f64>> = recs
        .iter()
        .map(|r| {
            let f = features_stage1(&r.bundle, r.n());
            let n = f[0];
            vec![f[1] / n, f[2] / n, f[3] / n]
        })
        .collect();
    let y: Vec<f64> = recs.iter().map(|r| r.timing.t_pq / r.n() as f64).collect();
    let per = fit_linear_nonneg(&x, &y, &STAGE1_FEATURES[1..])?;
    let mut coefs = vec![per.intercept()];
    coefs.extend_from_slice(per.coefs());
    LinearSurrogate::new(0.0, coefs, STAGE1_FEATURES.iter().map(|s| s.to_string()).collect())
}

fn fit_stage2(recs: &[&CalibrationRecord]) -> Result<CurveSurrogate<f64>> {
    let s: Vec<(f64, f64)> = recs
        .iter()
        .map(|r| (r.bundle.est_bitrate_huffman, r.timing.t_freq_book / r.n() as f64))
        .collect();
    fit_monotone_curve(&s, window_for(s.len()), true)
}

fn fit_stage3(recs: &[&CalibrationRecord], variant: CaseVariant) -> Result<Stage3Model> {
    let bitrates: Vec<f64> = recs.iter().map(|r| r.bundle.est_bitrate_huffman).collect();
    let tau = median(&bitrates);
    let rows = |r: &CalibrationRecord| {
        let n = r.n() as f64;
        r.bundle.cases(variant).as_array().map(|p| n * p).to_vec()
    };
    let low: Vec<&&CalibrationRecord> = recs.iter().filter(|r| r.bundle.est_bitrate_huffman <= tau).collect();
    // an overflowing write costs at least as much as one that fits, so the
    // fit runs over (n1 + n2, n2, n3) with non-negative weights; this keeps
    // the prediction non-decreasing as writes move from case 1 to case 2
    let x: Vec<Vec<f64>> = low
        .iter()
        .map(|r| {
            let n = rows(r);
            vec![n[0] + n[1], n[1], n[2]]
        })
        .collect();
    let y: Vec<f64> = low.iter().map(|r| r.timing.t_encode).collect();
    let w = fit_through_origin_nonneg(&x, &y)?;
    let weights = [w[0], w[0] + w[1], w[2]];
    let base = Stage3Model {
        weights,
        tau,
        ratio: CurveSurrogate::from_knots(1, vec![(tau, 1.0)])?,
    };
    let high: Vec<(f64, f64)> = recs
        .iter()
        .filter(|r| r.bundle.est_bitrate_huffman > tau)
        .filter_map(|r| {
            let lin = base.linear_part(r.bundle.cases(variant).as_array(), r.n());
            (lin > 0.0).then(|| (r.bundle.est_bitrate_huffman, r.timing.t_encode / lin))
        })
        .collect();
    if high.is_empty() {
        return Ok(base);
    }
    // the case weights are identified on the low half only, so the ratio is
    // left free to fall below 1 where they over-extrapolate
    let w = window_for(high.len());
    let fitted = fit_curve(&high, w)?;
    let mut knots = vec![(tau, 1.0)];
    knots.extend(fitted.knots);
    Ok(Stage3Model {
        ratio: CurveSurrogate::from_knots(w, knots)?,
        ..base
    })
}

fn fit_stage4(recs: &[&CalibrationRecord]) -> Result<Stage4Model> {
    let tp: Vec<(f64, f64)> = recs
        .iter()
        .map(|r| {
            let t = r.timing.t_lossless.max(1e-9);
            (r.metrics.lossless_ratio(), r.metrics.encoded_size.max(1) as f64 / t)
        })
        .collect();
    let throughput = fit_piecewise(&tp, 2)?;
    let lookup: Vec<(f64, f64)> = recs
        .iter()
        .map(|r| (r.bundle.est_bitrate_huffman, r.metrics.lossless_ratio()))
        .collect();
    let ratio_lookup = fit_monotone_curve(&lookup, window_for(lookup.len()), false)?;
    Ok(Stage4Model {
        throughput,
        ratio_lookup,
    })
}

fn distinct_ebs(records: &[&CalibrationRecord]) -> usize {
    records.iter().map(|r| r.config.eb.to_bits()).collect::<BTreeSet<_>>().len()
}

/// Fits the time model on `records` without any uncertainty estimate.
pub fn fit_time_model(records: &[CalibrationRecord], machine: &str) -> Result<TimeModel> {
    let all: Vec<&CalibrationRecord> = records.iter().collect();
    if all.len() < 8 || distinct_ebs(&all) < 4 {
        return Err(Error::InsufficientData(format!(
            "need 8 records over 4 error bounds, got {} over {}",
            all.len(),
            distinct_ebs(&all)
        )));
    }
    let base = records[0].config;
    if records
        .iter()
        .any(|r| r.config.quant_radius != base.quant_radius || r.config.lossless != base.lossless)
    {
        return Err(Error::InvalidConfig("records mix quant radii or lossless back-ends".into()));
    }
    let variant = select_case_variant(records);
    let (mut s1, mut s2, mut s3) = (BTreeMap::new(), BTreeMap::new(), BTreeMap::new());
    for p in Predictor::ALL {
        let recs: Vec<&CalibrationRecord> = all.iter().copied().filter(|r| r.config.predictor == p).collect();
        if recs.is_empty() {
            continue;
        }
        if recs.len() < 4 {
            return Err(Error::InsufficientData(format!("{} records for {p}", recs.len())));
        }
        s1.insert(p, fit_stage1(&recs)?);
        s2.insert(p, fit_stage2(&recs)?);
        s3.insert(p, fit_stage3(&recs, variant)?);
    }
    let fields: BTreeSet<&str> = records.iter().map(|r| r.field.as_str()).collect();
    let mut ebs: Vec<f64> = records.iter().map(|r| r.config.eb).collect();
    ebs.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ebs.dedup();
    let model = TimeModel {
        machine: machine.to_string(),
        case_variant: variant,
        s1,
        s2,
        s3,
        s4: fit_stage4(&all)?,
        calibration: CalibrationMeta {
            fields: fields.into_iter().map(String::from).collect(),
            eb_grid: ebs,
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            repeats: records.iter().map(|r| r.repeat_totals.len()).min().unwrap_or(0),
            sample_rate: base.sample_rate,
            quant_radius: base.quant_radius,
            lossless: base.lossless,
            notes: vec![
                "stage-2 and stage-3 curves keyed on estimated Huffman bitrate".into(),
                "stage-4 lossless ratio read from a calibration lookup on estimated bitrate".into(),
            ],
        },
    };
    model.validate()?;
    Ok(model)
}

/// Relative residuals `(actual − predicted) / predicted` of total time, each
/// field predicted by a model fitted without it. With a single field every
/// record is held out in turn instead.
pub fn held_out_residuals(records: &[CalibrationRecord], machine: &str) -> Result<Vec<f64>> {
    let fields: BTreeSet<&str> = records.iter().map(|r| r.field.as_str()).collect();
    let mut out = Vec::new();
    if fields.len() >= 2 {
        for f in &fields {
            let train: Vec<CalibrationRecord> = records.iter().filter(|r| r.field != *f).cloned().collect();
            let model = fit_time_model(&train, machine)?;
            for r in records.iter().filter(|r| r.field == *f) {
                out.push(residual(&model, r)?);
            }
        }
    } else {
        for i in 0..records.len() {
            let train: Vec<CalibrationRecord> = records
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, r)| r.clone())
                .collect();
            out.push(residual(&fit_time_model(&train, machine)?, &records[i])?);
        }
    }
    Ok(out)
}

fn residual(model: &TimeModel, r: &CalibrationRecord) -> Result<f64> {
    let pred = predict_total(&r.bundle, &r.config, model)?.t_total;
    if !(pred > 0.0) {
        return Err(Error::DegenerateFit(format!("non-positive prediction for {}", r.label())));
    }
    Ok((r.timing.t_total - pred) / pred)
}

/// Relative run-to-run deviations from the per-cell repeats. Each cell's
/// deviations from its own mean are inflated by `sqrt(r / (r − 1))` so the
/// pooled spread is not biased low by the small cell size.
pub fn system_residuals_from_records(records: &[CalibrationRecord]) -> Vec<f64> {
    let mut out = Vec::new();
    for r in records {
        let k = r.repeat_totals.len();
        if k < 2 {
            continue;
        }
        let m = r.repeat_totals.iter().sum::<f64>() / k as f64;
        let c = (k as f64 / (k as f64 - 1.0)).sqrt();
        out.extend(r.repeat_totals.iter().map(|t| c * (t - m) / m));
    }
    out
}

/// Fits the time model on all records and both uncertainty components.
pub fn fit_all(records: &[CalibrationRecord], machine: &str) -> Result<(TimeModel, UncertaintyModel)> {
    fit_all_with_system(records, machine, None)
}

/// Like [`fit_all`], but system noise comes from `system_times` (back-to-back
/// run times of one configuration) when given, instead of the cell repeats.
pub fn fit_all_with_system(
    records: &[CalibrationRecord],
    machine: &str,
    system_times: Option<&[f64]>,
) -> Result<(TimeModel, UncertaintyModel)> {
    let model = fit_time_model(records, machine)?;
    let algo = fit_normal(&held_out_residuals(records, machine)?)?;
    let sys_res = match system_times {
        Some(t) => crate::uncertainty::system_residuals(t, "system")
            .into_iter()
            .map(|r| r.value)
            .collect(),
        None => system_residuals_from_records(records),
    };
    let sys = fit_normal(&sys_res)?;
    let normalized: Vec<f64> = sys_res.iter().map(|v| 1.0 + v).collect();
    let gamma = fit_gamma(&normalized).ok();
    Ok((model, UncertaintyModel::new(algo, sys, gamma)))
}

/// On-disk form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    version: u64,
    machine: String,
    case_variant: CaseVariant,
    s1: BTreeMap<Predictor, LinearSurrogate<f64>>,
    s2: BTreeMap<Predictor, CurveSurrogate<f64>>,
    s3: BTreeMap<Predictor, Stage3Model>,
    s4: Stage4Model,
    uncertainty: UncertaintyModel,
    calibration: CalibrationMeta,
}

pub fn model_to_json(model: &TimeModel, uncertainty: &UncertaintyModel) -> Result<String> {
    let file = ModelFile {
        version: MODEL_VERSION,
        machine: model.machine.clone(),
        case_variant: model.case_variant,
        s1: model.s1.clone(),
        s2: model.s2.clone(),
        s3: model.s3.clone(),
        s4: model.s4.clone(),
        uncertainty: uncertainty.clone(),
        calibration: model.calibration.clone(),
    };
    serde_json::to_string_pretty(&file).map_err(|e| Error::ModelFormat(e.to_string()))
}

pub fn model_from_json(text: &str) -> Result<(TimeModel, UncertaintyModel)> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::ModelFormat(e.to_string()))?;
    match value.get("version").map(|v| v.as_u64()) {
        Some(Some(MODEL_VERSION)) => {}
        Some(Some(v)) => return Err(Error::Version(v)),
        Some(None) => return Err(Error::ModelFormat("version must be an unsigned integer".into())),
        None => return Err(Error::ModelFormat("missing version".into())),
    }
    let f: ModelFile = serde_json::from_value(value).map_err(|e| Error::ModelFormat(e.to_string()))?;
    let model = TimeModel {
        machine: f.machine,
        case_variant: f.case_variant,
        s1: f.s1,
        s2: f.s2,
        s3: f.s3,
        s4: f.s4,
        calibration: f.calibration,
    };
    model.validate()?;
    Ok((model, f.uncertainty))
}

pub fn save_model(model: &TimeModel, uncertainty: &UncertaintyModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = model_to_json(model, uncertainty)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(TimeModel, UncertaintyModel)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}
