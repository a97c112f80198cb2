//! Surrogate and uncertainty fits on synthetic data with known answers, and
//! a small end-to-end calibration.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use ctm_core::calibration::{
    fit_all, load_model, model_from_json, model_to_json, run_sweep, save_model, CalibrationPlan,
};
use ctm_core::data_io::{synth_field, SynthKind};
use ctm_core::estimator::characterize;
use ctm_core::time_model::{fit_curve, fit_linear, fit_piecewise, predict_total};
use ctm_core::uncertainty::{fit_gamma, fit_normal};
use ctm_core::{CompressionConfig, Error, Predictor, ScalarField};

#[test]
fn linear_recovers_noisy_coefficients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = Normal::new(0.0, 0.05).unwrap();
    let x: Vec<Vec<f64>> = (0..2000).map(|_| vec![rng.random_range(0.0..10.0), rng.random_range(-5.0..5.0)]).collect();
    let y: Vec<f64> = x.iter().map(|r| 1.5 + 0.7 * r[0] - 2.0 * r[1] + noise.sample(&mut rng)).collect();
    let m = fit_linear(&x, &y, &["a", "b"]).unwrap();
    assert!((m.intercept() - 1.5).abs() < 0.02, "{m:?}");
    assert!((m.coefs()[0] - 0.7).abs() < 0.005, "{m:?}");
    assert!((m.coefs()[1] + 2.0).abs() < 0.005, "{m:?}");
    assert!(m.r_squared(&x, &y).unwrap() > 0.99);
}

#[test]
fn curve_smooths_noise_around_the_trend() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noise = Normal::new(0.0, 0.1).unwrap();
    let samples: Vec<(f64, f64)> = (0..400)
        .map(|_| {
            let x = rng.random_range(0.0..4.0);
            (x, x * x + noise.sample(&mut rng))
        })
        .collect();
    let c = fit_curve(&samples, 21).unwrap();
    for x in [0.5, 1.0, 2.0, 3.0, 3.5] {
        assert!((c.eval(x) - x * x).abs() < 0.15, "{x}: {}", c.eval(x));
    }
    let (lo, hi) = c.x_range();
    assert_eq!(c.eval(lo - 10.0), c.eval(lo));
    assert_eq!(c.eval(hi + 10.0), c.eval(hi));
}

#[test]
fn piecewise_finds_the_knee() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let noise = Normal::new(0.0, 0.02).unwrap();
    let truth = |x: f64| if x < 4.0 { 1.0 + 0.5 * x } else { 3.0 - 0.25 * (x - 4.0) };
    let samples: Vec<(f64, f64)> = (0..300)
        .map(|_| {
            let x = rng.random_range(1.0..9.0);
            (x, truth(x) + noise.sample(&mut rng))
        })
        .collect();
    let m = fit_piecewise(&samples, 2).unwrap();
    assert!(!m.breakpoints.is_empty());
    assert!(m.breakpoints.iter().any(|b| (b - 4.0).abs() < 0.6), "{:?}", m.breakpoints);
    for x in [1.5, 3.0, 5.0, 8.0] {
        assert!((m.eval(x) - truth(x)).abs() < 0.08, "{x}: {} vs {}", m.eval(x), truth(x));
    }
}

#[test]
fn piecewise_keeps_one_segment_on_a_line() {
    let samples: Vec<(f64, f64)> = (0..50).map(|i| (i as f64, 2.0 + 0.1 * i as f64)).collect();
    let m = fit_piecewise(&samples, 2).unwrap();
    assert!(m.breakpoints.is_empty(), "{:?}", m.breakpoints);
}

#[test]
fn normal_and_gamma_recover_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let xs: Vec<f64> = Normal::new(0.02, 0.05).unwrap().sample_iter(&mut rng).take(20_000).collect();
    let nf = fit_normal(&xs).unwrap();
    assert!((nf.mu - 0.02).abs() < 0.002 && (nf.sigma - 0.05).abs() < 0.002, "{nf:?}");
    let gs: Vec<f64> = Gamma::new(4.0, 0.5).unwrap().sample_iter(&mut rng).take(20_000).collect();
    let gf = fit_gamma(&gs).unwrap();
    assert!((gf.shape - 4.0).abs() < 0.25 && (gf.scale - 0.5).abs() < 0.03, "{gf:?}");
    assert!(fit_gamma(&[1.0, 2.0, -1.0, 3.0]).is_err());
}

fn small_fields() -> Vec<ScalarField> {
    (1..=2)
        .map(|s| synth_field(SynthKind::Smooth, &[40, 40, 40], s).unwrap().with_name(format!("f{s}")))
        .collect()
}

fn small_plan(fields: &[ScalarField]) -> CalibrationPlan {
    let mut plan = CalibrationPlan::new(fields.iter().map(|f| f.name().to_string()).collect());
    plan.machine = "test".into();
    plan
}

#[test]
fn calibrated_model_survives_json_and_disk() {
    let fields = small_fields();
    let plan = small_plan(&fields);
    let records = run_sweep(&plan, |n| Ok(fields.iter().find(|f| f.name() == n).unwrap().clone())).unwrap();
    assert_eq!(records.len(), 2 * plan.eb_grid.len() * plan.predictors.len());
    let (model, unc) = fit_all(&records, "test").unwrap();

    let (m2, u2) = model_from_json(&model_to_json(&model, &unc).unwrap()).unwrap();
    assert_eq!(m2, model);
    assert_eq!(u2, unc);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&model, &unc, &path).unwrap();
    let (m3, u3) = load_model(&path).unwrap();
    assert_eq!(m3, model);
    assert_eq!(u3, unc);

    let mut doc: serde_json::Value = serde_json::from_str(&model_to_json(&model, &unc).unwrap()).unwrap();
    doc["surprise"] = serde_json::json!(1);
    assert!(matches!(model_from_json(&doc.to_string()), Err(Error::ModelFormat(_))));
    doc.as_object_mut().unwrap().remove("surprise");
    doc["version"] = serde_json::json!(7);
    assert!(matches!(model_from_json(&doc.to_string()), Err(Error::Version(7))));
    assert!(model_from_json("{not json").is_err());
}

#[test]
fn predictions_are_positive_and_bracketed() {
    let fields = small_fields();
    let plan = small_plan(&fields);
    let records = run_sweep(&plan, |n| Ok(fields.iter().find(|f| f.name() == n).unwrap().clone())).unwrap();
    let (model, unc) = fit_all(&records, "test").unwrap();
    let held = synth_field(SynthKind::Smooth, &[40, 40, 40], 9).unwrap();
    for p in Predictor::ALL {
        for &eb in &plan.eb_grid {
            let cfg = plan.base.with_eb(eb).with_predictor(p);
            let r = predict_total(&characterize(&held, &cfg, 0).unwrap(), &cfg, &model).unwrap();
            assert!(r.stages().iter().all(|&t| t >= 0.0), "{r:?}");
            assert!((r.stages().iter().sum::<f64>() - r.t_total).abs() <= 1e-12 * r.t_total);
            let (lo, hi) = unc.confidence_interval(r.t_total, 0.95).unwrap();
            assert!(lo <= r.t_total * (1.0 + unc.combined.mu) && r.t_total * (1.0 + unc.combined.mu) <= hi);
        }
    }
    let other = CompressionConfig { quant_radius: 77, ..plan.base };
    let b = characterize(&held, &other, 0).unwrap();
    assert!(predict_total(&b, &other, &model).is_err());
}
