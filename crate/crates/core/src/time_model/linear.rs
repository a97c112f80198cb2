use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Condition estimate above which ridge damping is applied.
const MAX_CONDITION: f64 = 1e10;
const RIDGE_SCALE: f64 = 1e-8;

/// Affine model `y = weights[0] + Σ weights[i+1]·x[i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct LinearSurrogate<T> {
    /// Intercept first, then one coefficient per feature.
    pub weights: Vec<T>,
    pub feature_names: Vec<String>,
}

impl<T: Real> LinearSurrogate<T> {
    pub fn new(intercept: T, coefs: Vec<T>, feature_names: Vec<String>) -> Result<Self> {
        if coefs.len() != feature_names.len() {
            return Err(Error::ModelFormat(format!(
                "{} coefficients for {} features",
                coefs.len(),
                feature_names.len()
            )));
        }
        let mut weights = vec![intercept];
        weights.extend(coefs);
        let m = Self { weights, feature_names };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != self.feature_names.len() + 1 {
            return Err(Error::ModelFormat("weights must be features + 1 long".into()));
        }
        if self.weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::ModelFormat("non-finite linear weight".into()));
        }
        Ok(())
    }

    pub fn intercept(&self) -> T {
        self.weights[0]
    }

    pub fn coefs(&self) -> &[T] {
        &self.weights[1..]
    }

    pub fn predict(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.coefs().len());
        self.coefs()
            .iter()
            .zip(x)
            .fold(self.intercept(), |acc, (&w, &v)| acc + w * v)
    }

    /// Coefficient of determination on a data set.
    pub fn r_squared(&self, x: &[Vec<T>], y: &[T]) -> Option<T> {
        let my = crate::num::mean(y)?;
        let (mut ss_res, mut ss_tot) = (T::zero(), T::zero());
        for (row, &yi) in x.iter().zip(y) {
            let e = yi - self.predict(row);
            ss_res = ss_res + e * e;
            ss_tot = ss_tot + (yi - my) * (yi - my);
        }
        if ss_tot <= T::zero() {
            return None;
        }
        Some(T::one() - ss_res / ss_tot)
    }
}

/// Ordinary least squares with an intercept.
///
/// Columns are centered and scaled before solving the normal equations.
/// When the pivot ratio of the elimination exceeds 1e10 the system is
/// re-solved with ridge damping `λ = 1e-8 · trace`. Constant columns get a
/// zero coefficient.
pub fn fit_linear<T: Real>(x: &[Vec<T>], y: &[T], feature_names: &[&str]) -> Result<LinearSurrogate<T>> {
    let p = feature_names.len();
    let n = y.len();
    if x.len() != n {
        return Err(Error::InvalidConfig(format!("{} rows but {n} targets", x.len())));
    }
    if n < p + 1 {
        return Err(Error::InsufficientData(format!("{n} rows for {p} features plus intercept")));
    }
    if x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidConfig("ragged feature matrix".into()));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite input".into()));
    }
    let nf = T::from_usize_lossy(n);
    let ym = y.iter().copied().sum::<T>() / nf;
    let mut xm = vec![T::zero(); p];
    for row in x {
        for (m, &v) in xm.iter_mut().zip(row) {
            *m = *m + v;
        }
    }
    xm.iter_mut().for_each(|m| *m = *m / nf);
    let mut scale = vec![T::zero(); p];
    for row in x {
        for j in 0..p {
            let d = row[j] - xm[j];
            scale[j] = scale[j] + d * d;
        }
    }
    for s in &mut scale {
        *s = (*s / nf).sqrt();
        if *s <= T::zero() {
            *s = T::one();
        }
    }

    let mut a = vec![vec![T::zero(); p]; p];
    let mut b = vec![T::zero(); p];
    for (row, &yi) in x.iter().zip(y) {
        let z: Vec<T> = (0..p).map(|j| (row[j] - xm[j]) / scale[j]).collect();
        let yc = yi - ym;
        for i in 0..p {
            b[i] = b[i] + z[i] * yc;
            for j in 0..p {
                a[i][j] = a[i][j] + z[i] * z[j];
            }
        }
    }

    let beta = solve_damped(a, b)?;
    let coefs: Vec<T> = (0..p).map(|j| beta[j] / scale[j]).collect();
    let intercept = coefs.iter().zip(&xm).fold(ym, |acc, (&c, &m)| acc - c * m);
    LinearSurrogate::new(
        intercept,
        coefs,
        feature_names.iter().map(|s| s.to_string()).collect(),
    )
    .map_err(|e| Error::DegenerateFit(e.to_string()))
}

/// [`fit_linear`] with every slope constrained to be `>= 0`. Features whose
/// coefficient comes out negative are dropped one at a time, most negative
/// first, and the rest refitted; dropped features keep a zero coefficient.
pub fn fit_linear_nonneg<T: Real>(x: &[Vec<T>], y: &[T], feature_names: &[&str]) -> Result<LinearSurrogate<T>> {
    let p = feature_names.len();
    let mut active: Vec<usize> = (0..p).collect();
    loop {
        let sub: Vec<Vec<T>> = x.iter().map(|r| active.iter().map(|&j| r[j]).collect()).collect();
        let names: Vec<&str> = active.iter().map(|&j| feature_names[j]).collect();
        let fit = fit_linear(&sub, y, &names)?;
        let worst = fit
            .coefs()
            .iter()
            .enumerate()
            .filter(|(_, c)| **c < T::zero())
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k);
        match worst {
            Some(k) => {
                active.remove(k);
            }
            None => {
                let mut coefs = vec![T::zero(); p];
                for (&j, &c) in active.iter().zip(fit.coefs()) {
                    coefs[j] = c;
                }
                return LinearSurrogate::new(
                    fit.intercept(),
                    coefs,
                    feature_names.iter().map(|s| s.to_string()).collect(),
                );
            }
        }
    }
}

/// Solves the normal equations, switching to ridge damping when the pivot
/// ratio exceeds [`MAX_CONDITION`].
fn solve_damped<T: Real>(mut a: Vec<Vec<T>>, b: Vec<T>) -> Result<Vec<T>> {
    match solve(a.clone(), b.clone()) {
        Some((beta, cond)) if cond <= MAX_CONDITION => Ok(beta),
        _ => {
            let p = b.len();
            let trace = (0..p).map(|i| a[i][i]).sum::<T>();
            let lambda = T::lit(RIDGE_SCALE) * trace.max(T::min_positive_value());
            for (i, r) in a.iter_mut().enumerate() {
                r[i] = r[i] + lambda;
            }
            solve(a, b)
                .map(|(beta, _)| beta)
                .ok_or_else(|| Error::DegenerateFit("normal equations singular after damping".into()))
        }
    }
}

/// Least squares without an intercept, `y ≈ Σ w[j]·x[j]`. Columns are scaled
/// by their root mean square; damping follows [`fit_linear`].
pub fn fit_through_origin<T: Real>(x: &[Vec<T>], y: &[T]) -> Result<Vec<T>> {
    let n = y.len();
    let p = x.first().map_or(0, |r| r.len());
    if x.len() != n || x.iter().any(|r| r.len() != p) {
        return Err(Error::InvalidConfig("ragged feature matrix".into()));
    }
    if n < p || p == 0 {
        return Err(Error::InsufficientData(format!("{n} rows for {p} coefficients")));
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateFit("non-finite input".into()));
    }
    let mut scale = vec![T::zero(); p];
    for row in x {
        for j in 0..p {
            scale[j] = scale[j] + row[j] * row[j];
        }
    }
    for s in &mut scale {
        *s = (*s / T::from_usize_lossy(n)).sqrt();
        if *s <= T::zero() {
            *s = T::one();
        }
    }
    let mut a = vec![vec![T::zero(); p]; p];
    let mut b = vec![T::zero(); p];
    for (row, &yi) in x.iter().zip(y) {
        for i in 0..p {
            let zi = row[i] / scale[i];
            b[i] = b[i] + zi * yi;
            for j in 0..p {
                a[i][j] = a[i][j] + zi * row[j] / scale[j];
            }
        }
    }
    let beta = solve_damped(a, b)?;
    Ok((0..p).map(|j| beta[j] / scale[j]).collect())
}

/// [`fit_through_origin`] with every weight held at or above zero. Negative
/// weights are dropped one at a time, most negative first, and the rest refit.
pub fn fit_through_origin_nonneg<T: Real>(x: &[Vec<T>], y: &[T]) -> Result<Vec<T>> {
    let p = x.first().map_or(0, |r| r.len());
    let mut active: Vec<usize> = (0..p).collect();
    loop {
        let mut w = vec![T::zero(); p];
        if active.is_empty() {
            return Ok(w);
        }
        let sub: Vec<Vec<T>> = x.iter().map(|r| active.iter().map(|&j| r[j]).collect()).collect();
        let fit = fit_through_origin(&sub, y)?;
        let worst = fit
            .iter()
            .enumerate()
            .filter(|(_, c)| **c < T::zero())
            .min_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(k, _)| k);
        match worst {
            Some(k) => {
                active.remove(k);
            }
            None => {
                for (&j, &c) in active.iter().zip(&fit) {
                    w[j] = c;
                }
                return Ok(w);
            }
        }
    }
}

/// Gaussian elimination with partial pivoting; also returns the ratio of the
/// largest to smallest absolute pivot as a cheap condition estimate.
fn solve<T: Real>(mut a: Vec<Vec<T>>, mut b: Vec<T>) -> Option<(Vec<T>, f64)> {
    let p = b.len();
    if p == 0 {
        return Some((Vec::new(), 1.0));
    }
    let (mut pmax, mut pmin) = (0.0f64, f64::INFINITY);
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())?;
        a.swap(col, piv);
        b.swap(col, piv);
        let d = a[col][col];
        let ad = d.abs().as_f64();
        pmax = pmax.max(ad);
        pmin = pmin.min(ad);
        if ad == 0.0 {
            return None;
        }
        for r in col + 1..p {
            let f = a[r][col] / d;
            let (top, bottom) = a.split_at_mut(r);
            for (x, &y) in bottom[0][col..].iter_mut().zip(&top[col][col..]) {
                *x = *x - f * y;
            }
            b[r] = b[r] - f * b[col];
        }
    }
    let mut x = vec![T::zero(); p];
    for r in (0..p).rev() {
        let s = (r + 1..p).fold(b[r], |acc, c| acc - a[r][c] * x[c]);
        x[r] = s / a[r][r];
    }
    Some((x, pmax / pmin))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nonneg_drops_negative_slope() {
        // y = 2 + 3a - b: b gets clamped, a absorbs what it can
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 + 3.0 * r[0] - r[1]).collect();
        let f = fit_linear_nonneg(&x, &y, &["a", "b"]).unwrap();
        assert_eq!(f.coefs()[1], 0.0);
        assert!(f.coefs()[0] > 0.0);
        let all_neg: Vec<f64> = x.iter().map(|r| 5.0 - r[0]).collect();
        let g = fit_linear_nonneg(&x, &all_neg, &["a", "b"]).unwrap();
        assert_eq!(g.coefs(), &[0.0, 0.0]);
        assert!((g.intercept() - (5.0 - 9.5)).abs() < 1e-12);
    }

    #[test]
    fn origin_nonneg_drops_negative_weight() {
        let x: Vec<Vec<f64>> = (1..20).map(|i| vec![i as f64, ((i * 7) % 5) as f64]).collect();
        let y: Vec<f64> = x.iter().map(|r| 3.0 * r[0] - r[1]).collect();
        let w = fit_through_origin_nonneg(&x, &y).unwrap();
        assert_eq!(w[1], 0.0);
        assert!(w[0] > 0.0 && w[0] < 3.0);
        let exact: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 0.5 * r[1]).collect();
        let v = fit_through_origin_nonneg(&x, &exact).unwrap();
        assert!((v[0] - 2.0).abs() < 1e-9 && (v[1] - 0.5).abs() < 1e-9);
        let neg: Vec<f64> = x.iter().map(|r| -r[0]).collect();
        assert_eq!(fit_through_origin_nonneg(&x, &neg).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn exact_line() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| 2.0 * i as f64).collect();
        let m = fit_linear(&x, &y, &["x"]).unwrap();
        assert!((m.coefs()[0] - 2.0).abs() < 1e-9);
        assert!(m.intercept().abs() < 1e-9);
    }

    #[test]
    fn constant_target() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let m = fit_linear(&x, &[4.5; 10], &["a", "b"]).unwrap();
        assert!(m.coefs().iter().all(|c| c.abs() < 1e-12));
        assert!((m.intercept() - 4.5).abs() < 1e-12);
    }

    #[test]
    fn collinear_columns_use_ridge() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let y: Vec<f64> = (0..20).map(|i| 5.0 * i as f64 + 1.0).collect();
        let m = fit_linear(&x, &y, &["a", "b"]).unwrap();
        for (row, yi) in x.iter().zip(&y) {
            assert!((m.predict(row) - yi).abs() < 1e-5);
        }
    }

    #[test]
    fn constant_column_gets_zero() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![3.0, i as f64]).collect();
        let y: Vec<f64> = (0..8).map(|i| 1.0 + 0.5 * i as f64).collect();
        let m = fit_linear(&x, &y, &["c", "x"]).unwrap();
        assert!(m.coefs()[0].abs() < 1e-9);
        assert!((m.coefs()[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn too_few_rows() {
        let x = vec![vec![1.0f64, 2.0], vec![2.0, 1.0]];
        assert!(matches!(fit_linear(&x, &[1.0, 2.0], &["a", "b"]), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn origin_fit_handles_dependent_columns() {
        // third column is a multiple of the sum of the first two
        let x: Vec<Vec<f64>> = (0..12)
            .map(|i| {
                let a = 1.0 + i as f64;
                let b = 20.0 - i as f64;
                vec![a, b, (a + b) / 7.0]
            })
            .collect();
        let y: Vec<f64> = x.iter().map(|r| 2.0 * r[0] + 3.0 * r[1] + 1.0 * r[2]).collect();
        let w = fit_through_origin(&x, &y).unwrap();
        for (r, yi) in x.iter().zip(&y) {
            let p: f64 = r.iter().zip(&w).map(|(a, b)| a * b).sum();
            assert!((p - yi).abs() < 1e-6 * yi.abs());
        }
    }

    #[test]
    fn works_in_f32() {
        let x: Vec<Vec<f32>> = (0..10).map(|i| vec![i as f32]).collect();
        let y: Vec<f32> = (0..10).map(|i| 3.0 * i as f32 + 1.0).collect();
        let m = fit_linear(&x, &y, &["x"]).unwrap();
        assert!((m.coefs()[0] - 3.0).abs() < 1e-4);
    }
}
