//! Algorithm and system uncertainty of the time prediction, and the
//! confidence intervals derived from them.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal as StdNormal};

use crate::codec::{compress, CompressionConfig};
use crate::data_io::ScalarField;
use crate::error::{Error, Result};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualKind {
    Algorithm,
    System,
}

/// A relative deviation, tagged with where it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub kind: ResidualKind,
    pub value: f64,
    /// `field/eb/predictor` label.
    pub context: String,
}

impl ResidualSample {
    /// `(actual − predicted) / predicted`.
    pub fn algorithm(actual: f64, predicted: f64, context: impl Into<String>) -> Self {
        Self {
            kind: ResidualKind::Algorithm,
            value: (actual - predicted) / predicted,
            context: context.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct NormalFit<T> {
    pub mu: T,
    pub sigma: T,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct GammaFit<T> {
    pub shape: T,
    pub scale: T,
    pub n: usize,
}

impl<T: Real> GammaFit<T> {
    pub fn mean(&self) -> T {
        self.shape * self.scale
    }
}

/// Sample mean and `n − 1` standard deviation.
pub fn fit_normal<T: Real>(samples: &[T]) -> Result<NormalFit<T>> {
    let n = samples.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!("normal fit needs 2 samples, got {n}")));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite residual".into()));
    }
    let mu = samples.iter().copied().sum::<T>() / T::from_usize_lossy(n);
    let ss = samples.iter().map(|&v| (v - mu) * (v - mu)).sum::<T>();
    Ok(NormalFit {
        mu,
        sigma: (ss / T::from_usize_lossy(n - 1)).sqrt(),
        n,
    })
}

/// Method-of-moments gamma fit: `k = mean² / var`, `θ = var / mean`.
pub fn fit_gamma<T: Real>(samples: &[T]) -> Result<GammaFit<T>> {
    let n = samples.len();
    if n < 4 {
        return Err(Error::InsufficientData(format!("gamma fit needs 4 samples, got {n}")));
    }
    if samples.iter().any(|&v| !(v > T::zero() && v.is_finite())) {
        return Err(Error::DegenerateFit("gamma samples must be positive".into()));
    }
    let nf = fit_normal(samples)?;
    let var = nf.sigma * nf.sigma;
    if !(var > T::zero()) {
        return Err(Error::DegenerateFit("zero variance".into()));
    }
    Ok(GammaFit {
        shape: nf.mu * nf.mu / var,
        scale: var / nf.mu,
        n,
    })
}

/// Wall-clock totals of `repeats` back-to-back compressions after one
/// discarded warm-up run.
pub fn repeat_times(field: &ScalarField, config: &CompressionConfig, repeats: usize) -> Result<Vec<f64>> {
    if repeats < 5 {
        return Err(Error::InvalidConfig(format!("need at least 5 repeats, got {repeats}")));
    }
    compress(field, config)?;
    (0..repeats)
        .map(|_| compress(field, config).map(|(_, t, _)| t.t_total))
        .collect()
}

/// Relative deviations of repeated run times from their mean.
pub fn system_residuals(times: &[f64], context: &str) -> Vec<ResidualSample> {
    let m = times.iter().sum::<f64>() / times.len().max(1) as f64;
    times
        .iter()
        .map(|&t| ResidualSample {
            kind: ResidualKind::System,
            value: (t - m) / m,
            context: context.to_string(),
        })
        .collect()
}

pub fn measure_system(field: &ScalarField, config: &CompressionConfig, repeats: usize) -> Result<Vec<ResidualSample>> {
    let times = repeat_times(field, config, repeats)?;
    Ok(system_residuals(&times, &format!("{}/{:e}/{}", field.name(), config.eb, config.predictor)))
}

/// Two-sided standard normal quantile for a central `level`.
pub fn z_score(level: f64) -> Result<f64> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence level must be in (0, 1), got {level}")));
    }
    let std = StdNormal::new(0.0, 1.0).expect("standard normal");
    Ok(std.inverse_cdf(0.5 + level / 2.0))
}

/// Algorithm and system fits, and their sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "UncertaintyParams", try_from = "UncertaintyParams")]
pub struct UncertaintyModel {
    pub algo: NormalFit<f64>,
    pub sys: NormalFit<f64>,
    /// Gamma fit of raw run times, reported only.
    pub gamma_diag: Option<GammaFit<f64>>,
    pub combined: NormalFit<f64>,
}

impl UncertaintyModel {
    pub fn new(algo: NormalFit<f64>, sys: NormalFit<f64>, gamma_diag: Option<GammaFit<f64>>) -> Self {
        let combined = NormalFit {
            mu: algo.mu + sys.mu,
            sigma: (algo.sigma * algo.sigma + sys.sigma * sys.sigma).sqrt(),
            n: algo.n + sys.n,
        };
        Self {
            algo,
            sys,
            gamma_diag,
            combined,
        }
    }

    pub fn confidence_interval(&self, t_pred: f64, level: f64) -> Result<(f64, f64)> {
        confidence_interval(t_pred, self, level)
    }
}

/// `t · (1 + μ ± z·σ)` under the combined fit, with the low end clamped at 0.
pub fn confidence_interval(t_pred: f64, model: &UncertaintyModel, level: f64) -> Result<(f64, f64)> {
    let z = z_score(level)?;
    let c = &model.combined;
    if !(c.mu.is_finite() && c.sigma.is_finite() && c.sigma >= 0.0) {
        return Err(Error::Unfitted("uncertainty".into()));
    }
    let lo = t_pred * (1.0 + c.mu - z * c.sigma);
    let hi = t_pred * (1.0 + c.mu + z * c.sigma);
    Ok((lo.max(0.0), hi))
}

/// Flat form stored in the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyParams {
    pub mu_a: f64,
    pub sigma_a: f64,
    pub mu_s: f64,
    pub sigma_s: f64,
    pub gamma_k: Option<f64>,
    pub gamma_theta: Option<f64>,
    pub n_a: usize,
    pub n_s: usize,
}

impl From<UncertaintyModel> for UncertaintyParams {
    fn from(m: UncertaintyModel) -> Self {
        Self {
            mu_a: m.algo.mu,
            sigma_a: m.algo.sigma,
            mu_s: m.sys.mu,
            sigma_s: m.sys.sigma,
            gamma_k: m.gamma_diag.map(|g| g.shape),
            gamma_theta: m.gamma_diag.map(|g| g.scale),
            n_a: m.algo.n,
            n_s: m.sys.n,
        }
    }
}

impl TryFrom<UncertaintyParams> for UncertaintyModel {
    type Error = Error;

    fn try_from(p: UncertaintyParams) -> Result<Self> {
        let ok = |v: f64| v.is_finite();
        if !(ok(p.mu_a) && ok(p.mu_s) && ok(p.sigma_a) && ok(p.sigma_s) && p.sigma_a >= 0.0 && p.sigma_s >= 0.0) {
            return Err(Error::ModelFormat("uncertainty parameters must be finite, sigmas >= 0".into()));
        }
        let gamma = match (p.gamma_k, p.gamma_theta) {
            (Some(shape), Some(scale)) => Some(GammaFit {
                shape,
                scale,
                n: p.n_s,
            }),
            (None, None) => None,
            _ => return Err(Error::ModelFormat("gamma_k and gamma_theta go together".into())),
        };
        Ok(UncertaintyModel::new(
            NormalFit {
                mu: p.mu_a,
                sigma: p.sigma_a,
                n: p.n_a,
            },
            NormalFit {
                mu: p.mu_s,
                sigma: p.sigma_s,
                n: p.n_s,
            },
            gamma,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn normal(mu: f64, sigma: f64) -> NormalFit<f64> {
        NormalFit { mu, sigma, n: 10 }
    }

    #[test]
    fn two_point_normal() {
        let f = fit_normal(&[-1.0f64, 1.0]).unwrap();
        assert_eq!(f.mu, 0.0);
        assert!((f.sigma - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(fit_normal(&[0.3f64; 7]).unwrap().sigma, 0.0);
        assert!(fit_normal(&[1.0f64]).is_err());
    }

    #[test]
    fn gamma_rejects_degenerate() {
        assert!(matches!(fit_gamma(&[2.0f64; 8]), Err(Error::DegenerateFit(_))));
        assert!(fit_gamma(&[1.0f64, 2.0, 3.0]).is_err());
        assert!(fit_gamma(&[1.0f64, 2.0, -3.0, 4.0]).is_err());
    }

    #[test]
    fn pythagorean_sum() {
        let m = UncertaintyModel::new(normal(0.0, 0.03), normal(0.0, 0.04), None);
        assert!((m.combined.sigma - 0.05).abs() < 1e-15);
    }

    #[test]
    fn ci_arithmetic() {
        assert!((z_score(0.95).unwrap() - 1.959964).abs() < 1e-6);
        let m = UncertaintyModel::new(normal(0.0, 0.039), normal(0.0, 0.0), None);
        let (lo, hi) = m.confidence_interval(10.0, 0.95).unwrap();
        assert!((lo - 9.2356).abs() < 1e-3, "{lo}");
        assert!((hi - 10.7644).abs() < 1e-3, "{hi}");
    }

    #[test]
    fn low_end_clamped() {
        let m = UncertaintyModel::new(normal(-0.5, 1.0), normal(0.0, 0.0), None);
        assert_eq!(m.confidence_interval(1.0, 0.95).unwrap().0, 0.0);
    }

    #[test]
    fn params_roundtrip() {
        let m = UncertaintyModel::new(
            normal(0.01, 0.03),
            normal(-0.002, 0.02),
            Some(GammaFit { shape: 9.0, scale: 0.1, n: 10 }),
        );
        let s = serde_json::to_string(&m).unwrap();
        let back: UncertaintyModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
