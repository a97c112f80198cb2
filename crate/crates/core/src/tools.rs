//! Evaluation and the two model-driven tools: predictor selection and
//! error-bound search under a time budget.

use std::collections::BTreeMap;

use crate::codec::{compress, CompressionConfig, Predictor, StageTiming};
use crate::data_io::{Cell, ScalarField, Table};
use crate::estimator::characterize;
use crate::error::{Error, Result};
use crate::time_model::{predict_total, PredictionReport, TimeModel};
use crate::uncertainty::UncertaintyModel;

pub const CI_LEVEL: f64 = 0.95;
/// Overall error of the original method, shown next to ours.
pub const REFERENCE_OVERALL_ERR: f64 = 0.05;
/// Bitrate band for predictor selection, relative to the best candidate.
pub const BITRATE_BAND: f64 = 0.05;
pub const MAX_SEARCH_ITERS: usize = 30;

/// Characterizes the field and predicts with a 95% interval attached.
pub fn predict_with_ci(
    field: &ScalarField,
    config: &CompressionConfig,
    model: &TimeModel,
    unc: &UncertaintyModel,
    seed: u64,
) -> Result<PredictionReport> {
    let bundle = characterize(field, config, seed)?;
    let r = predict_total(&bundle, config, model)?;
    let (lo, hi) = unc.confidence_interval(r.t_total, CI_LEVEL)?;
    Ok(r.with_ci(lo, hi))
}

/// A prediction next to the measured timing of the same cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalCell {
    pub field: String,
    pub config: CompressionConfig,
    pub predicted: PredictionReport,
    pub actual: StageTiming,
}

fn rel_err(pred: f64, actual: f64) -> f64 {
    if actual > 0.0 {
        (pred - actual).abs() / actual
    } else {
        0.0
    }
}

impl EvalCell {
    /// Relative error of each stage, then of the total.
    pub fn errors(&self) -> [f64; 5] {
        let p = self.predicted.stages();
        let a = self.actual.stages();
        [
            rel_err(p[0], a[0]),
            rel_err(p[1], a[1]),
            rel_err(p[2], a[2]),
            rel_err(p[3], a[3]),
            rel_err(self.predicted.t_total, self.actual.t_total),
        ]
    }

    pub fn covered(&self) -> bool {
        (self.predicted.ci_low..=self.predicted.ci_high).contains(&self.actual.t_total)
    }
}

/// Predicts, then compresses `repeats` times and keeps the per-stage median.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_field(
    field: &ScalarField,
    base: &CompressionConfig,
    eb_grid: &[f64],
    predictors: &[Predictor],
    model: &TimeModel,
    unc: &UncertaintyModel,
    repeats: usize,
    seed: u64,
) -> Result<Vec<EvalCell>> {
    if repeats == 0 {
        return Err(Error::InvalidConfig("repeats must be positive".into()));
    }
    let mut out = Vec::new();
    for &eb in eb_grid {
        for &p in predictors {
            let cfg = base.with_eb(eb).with_predictor(p);
            let predicted = predict_with_ci(field, &cfg, model, unc, seed)?;
            let runs = (0..repeats)
                .map(|_| compress(field, &cfg).map(|(_, t, _)| t))
                .collect::<Result<Vec<_>>>()?;
            out.push(EvalCell {
                field: field.name().to_string(),
                config: cfg,
                predicted,
                actual: StageTiming::median_of(&runs).expect("repeats > 0"),
            });
        }
    }
    Ok(out)
}

pub const EVAL_COLUMNS: [&str; 11] = [
    "field",
    "predictor",
    "cells",
    "pred_quant_err",
    "freq_build_err",
    "encode_err",
    "lossless_err",
    "overall_err",
    "ci_coverage",
    "sigma",
    "reference_overall_err",
];

/// Mean absolute relative error per stage for each (field, predictor), then
/// one `ALL` row over every cell.
pub fn evaluation_table(cells: &[EvalCell], unc: &UncertaintyModel) -> Table {
    let mut groups: BTreeMap<(String, Predictor), Vec<&EvalCell>> = BTreeMap::new();
    for c in cells {
        groups.entry((c.field.clone(), c.config.predictor)).or_default().push(c);
    }
    let mut t = Table::new(EVAL_COLUMNS);
    let mut row = |field: &str, pred: &str, g: &[&EvalCell]| {
        let k = g.len().max(1) as f64;
        let mut err = [0.0; 5];
        for c in g {
            for (e, v) in err.iter_mut().zip(c.errors()) {
                *e += v / k;
            }
        }
        let cov = g.iter().filter(|c| c.covered()).count() as f64 / k;
        let mut r = vec![Cell::from(field), Cell::from(pred), Cell::from(g.len())];
        r.extend(err.iter().map(|&e| Cell::from(e)));
        r.extend([
            Cell::from(cov),
            Cell::from(unc.combined.sigma),
            Cell::from(REFERENCE_OVERALL_ERR),
        ]);
        t.push(r);
    };
    for ((f, p), g) in &groups {
        row(f, p.as_str(), g);
    }
    let all: Vec<&EvalCell> = cells.iter().collect();
    row("ALL", "all", &all);
    t
}

/// Fraction of cells whose measured total falls inside the interval.
pub fn coverage(cells: &[EvalCell]) -> f64 {
    cells.iter().filter(|c| c.covered()).count() as f64 / cells.len().max(1) as f64
}

pub fn mean_total_error(cells: &[EvalCell]) -> f64 {
    cells.iter().map(|c| c.errors()[4]).sum::<f64>() / cells.len().max(1) as f64
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub predictor: Predictor,
    pub time: f64,
    pub bitrate: f64,
}

/// Fastest candidate among those within 5% of the best bitrate; ties go to
/// the predictor listed first (Lorenzo before interpolation).
pub fn choose_predictor(candidates: &[Candidate]) -> Option<Predictor> {
    let best = candidates.iter().map(|c| c.bitrate).fold(f64::INFINITY, f64::min);
    let mut sorted = candidates.to_vec();
    sorted.sort_by_key(|c| c.predictor);
    sorted
        .iter()
        .filter(|c| c.bitrate <= best * (1.0 + BITRATE_BAND))
        .fold(None::<&Candidate>, |acc, c| match acc {
            Some(a) if a.time <= c.time => Some(a),
            _ => Some(c),
        })
        .map(|c| c.predictor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    pub chosen: Predictor,
    pub reports: Vec<PredictionReport>,
}

pub fn select_predictor(
    field: &ScalarField,
    base: &CompressionConfig,
    model: &TimeModel,
    unc: &UncertaintyModel,
    seed: u64,
) -> Result<Selection> {
    let mut reports = Vec::new();
    for p in Predictor::ALL {
        if !model.supports(p) {
            return Err(Error::Unfitted(format!("predictor {p}")));
        }
        reports.push(predict_with_ci(field, &base.with_predictor(p), model, unc, seed)?);
    }
    let cands: Vec<Candidate> = reports
        .iter()
        .map(|r| Candidate {
            predictor: r.predictor,
            time: r.t_total,
            bitrate: r.est_bitrate,
        })
        .collect();
    Ok(Selection {
        chosen: choose_predictor(&cands).expect("two candidates"),
        reports,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub eb: f64,
    pub predicted: f64,
    /// Predictor evaluations spent in the bisection (probes excluded).
    pub iterations: usize,
    /// False when even the largest bound misses the target.
    pub feasible: bool,
}

/// Finds the smallest `eb` in `[eb_min, eb_max]` whose predicted time meets
/// `target`, bisecting on `log(eb)`. Predicted time must not increase with
/// `eb`; this is probed at both ends and the geometric midpoint first.
pub fn search_eb_with<F>(mut time: F, target: f64, eb_min: f64, eb_max: f64, tol: f64) -> Result<SearchResult>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(eb_min > 0.0 && eb_min < eb_max && eb_max.is_finite()) {
        return Err(Error::InvalidConfig(format!("need 0 < eb-min < eb-max, got {eb_min}, {eb_max}")));
    }
    if !(target > 0.0 && target.is_finite()) || !(tol > 0.0) {
        return Err(Error::InvalidConfig("target and tolerance must be positive".into()));
    }
    let t_lo = time(eb_min)?;
    let t_mid = time((eb_min * eb_max).sqrt())?;
    let t_hi = time(eb_max)?;
    if !(t_lo >= t_mid && t_mid >= t_hi) {
        return Err(Error::NonMonotone(format!(
            "t({eb_min:e})={t_lo:e}, t(mid)={t_mid:e}, t({eb_max:e})={t_hi:e}"
        )));
    }
    if t_lo <= target {
        return Ok(SearchResult {
            eb: eb_min,
            predicted: t_lo,
            iterations: 0,
            feasible: true,
        });
    }
    if t_hi > target {
        return Ok(SearchResult {
            eb: eb_max,
            predicted: t_hi,
            iterations: 0,
            feasible: false,
        });
    }
    let (mut lo, mut hi, mut t_at_hi) = (eb_min.ln(), eb_max.ln(), t_hi);
    let mut iterations = 0;
    while iterations < MAX_SEARCH_ITERS && (t_at_hi - target).abs() > tol * target {
        let mid = 0.5 * (lo + hi);
        let t = time(mid.exp())?;
        iterations += 1;
        if t <= target {
            hi = mid;
            t_at_hi = t;
        } else {
            lo = mid;
        }
    }
    Ok(SearchResult {
        eb: hi.exp(),
        predicted: t_at_hi,
        iterations,
        feasible: true,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn search_eb(
    field: &ScalarField,
    base: &CompressionConfig,
    model: &TimeModel,
    target: f64,
    eb_min: f64,
    eb_max: f64,
    tol: f64,
    seed: u64,
) -> Result<SearchResult> {
    search_eb_with(
        |eb| {
            let cfg = base.with_eb(eb);
            let bundle = characterize(field, &cfg, seed)?;
            Ok(predict_total(&bundle, &cfg, model)?.t_total)
        },
        target,
        eb_min,
        eb_max,
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(p: Predictor, time: f64, bitrate: f64) -> Candidate {
        Candidate { predictor: p, time, bitrate }
    }

    #[test]
    fn tie_goes_to_lorenzo() {
        let cs = [c(Predictor::Interpolation, 1.0, 2.0), c(Predictor::Lorenzo, 1.0, 2.0)];
        assert_eq!(choose_predictor(&cs), Some(Predictor::Lorenzo));
    }

    #[test]
    fn dominant_wins() {
        let cs = [c(Predictor::Lorenzo, 2.0, 3.0), c(Predictor::Interpolation, 1.0, 2.0)];
        assert_eq!(choose_predictor(&cs), Some(Predictor::Interpolation));
    }

    #[test]
    fn faster_but_much_larger_loses() {
        let cs = [c(Predictor::Lorenzo, 0.5, 3.0), c(Predictor::Interpolation, 1.0, 2.0)];
        assert_eq!(choose_predictor(&cs), Some(Predictor::Interpolation));
        let cs = [c(Predictor::Lorenzo, 0.5, 2.08), c(Predictor::Interpolation, 1.0, 2.0)];
        assert_eq!(choose_predictor(&cs), Some(Predictor::Lorenzo));
    }

    #[test]
    fn search_boundaries_and_midrange() {
        let f = |eb: f64| Ok(1.0 / eb.powf(0.3));
        let r = search_eb_with(f, 1e6, 1e-6, 1e-1, 0.01).unwrap();
        assert_eq!((r.eb, r.feasible), (1e-6, true));
        let r = search_eb_with(f, 1e-3, 1e-6, 1e-1, 0.01).unwrap();
        assert!(!r.feasible);
        let r = search_eb_with(f, 20.0, 1e-6, 1e-1, 0.01).unwrap();
        assert!(r.feasible && r.iterations <= MAX_SEARCH_ITERS);
        assert!((r.predicted - 20.0).abs() <= 0.2);
        assert!((f(r.eb).unwrap() - 20.0).abs() <= 0.2);
    }

    #[test]
    fn non_monotone_rejected() {
        let f = |eb: f64| Ok(eb);
        assert!(matches!(search_eb_with(f, 0.01, 1e-6, 1e-1, 0.01), Err(Error::NonMonotone(_))));
    }
}
