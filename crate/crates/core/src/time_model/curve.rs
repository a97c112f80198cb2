use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

pub const DEFAULT_WINDOW: usize = 5;

/// Piecewise-linear curve through smoothed knots, flat beyond the end knots.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct CurveSurrogate<T> {
    pub window: usize,
    /// `(x, y)` with strictly increasing `x`.
    pub knots: Vec<(T, T)>,
}

impl<T: Real> CurveSurrogate<T> {
    pub fn from_knots(window: usize, knots: Vec<(T, T)>) -> Result<Self> {
        let c = Self { window, knots };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.knots.is_empty() {
            return Err(Error::ModelFormat("curve has no knots".into()));
        }
        if self.window == 0 || self.window.is_multiple_of(2) {
            return Err(Error::ModelFormat(format!("curve window {} must be odd", self.window)));
        }
        if self.knots.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::ModelFormat("non-finite curve knot".into()));
        }
        if self.knots.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::ModelFormat("curve knots must increase strictly in x".into()));
        }
        Ok(())
    }

    pub fn eval(&self, x: T) -> T {
        let k = &self.knots;
        let (first, last) = (k[0], k[k.len() - 1]);
        if !(x > first.0) {
            return first.1;
        }
        if x >= last.0 {
            return last.1;
        }
        let i = k.partition_point(|&(kx, _)| kx <= x);
        let ((x0, y0), (x1, y1)) = (k[i - 1], k[i]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    pub fn x_range(&self) -> (T, T) {
        (self.knots[0].0, self.knots[self.knots.len() - 1].0)
    }
}

/// Sorts samples by `x`, smooths `y` with a centered moving average (the
/// window shrinks at the ends), then merges equal `x` by averaging.
pub fn fit_curve<T: Real>(samples: &[(T, T)], window: usize) -> Result<CurveSurrogate<T>> {
    if samples.is_empty() {
        return Err(Error::InsufficientData("curve needs at least one sample".into()));
    }
    if window == 0 || window.is_multiple_of(2) {
        return Err(Error::InvalidConfig(format!("window must be odd and positive, got {window}")));
    }
    if samples.len() < window {
        return Err(Error::InsufficientData(format!(
            "{} samples for a window of {window}",
            samples.len()
        )));
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
        return Err(Error::DegenerateFit("non-finite curve sample".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let h = window / 2;
    let n = s.len();
    let smoothed: Vec<(T, T)> = (0..n)
        .map(|i| {
            let (lo, hi) = (i.saturating_sub(h), (i + h + 1).min(n));
            let y = s[lo..hi].iter().map(|p| p.1).sum::<T>() / T::from_usize_lossy(hi - lo);
            (s[i].0, y)
        })
        .collect();
    let mut knots: Vec<(T, T)> = Vec::with_capacity(n);
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j < n && smoothed[j].0 == smoothed[i].0 {
            j += 1;
        }
        let y = smoothed[i..j].iter().map(|p| p.1).sum::<T>() / T::from_usize_lossy(j - i);
        knots.push((smoothed[i].0, y));
        i = j;
    }
    CurveSurrogate::from_knots(window, knots)
}

/// [`fit_curve`] followed by pool-adjacent-violators on the knot values, so
/// the curve is non-decreasing (`increasing`) or non-increasing in `x`.
pub fn fit_monotone_curve<T: Real>(samples: &[(T, T)], window: usize, increasing: bool) -> Result<CurveSurrogate<T>> {
    let c = fit_curve(samples, window)?;
    let sign = if increasing { T::one() } else { -T::one() };
    // blocks of (sum, count) over sign-adjusted values
    let mut blocks: Vec<(T, usize)> = Vec::with_capacity(c.knots.len());
    for &(_, y) in &c.knots {
        blocks.push((sign * y, 1));
        while blocks.len() > 1 {
            let (s1, n1) = blocks[blocks.len() - 1];
            let (s0, n0) = blocks[blocks.len() - 2];
            if s0 / T::from_usize_lossy(n0) <= s1 / T::from_usize_lossy(n1) {
                break;
            }
            blocks.pop();
            *blocks.last_mut().unwrap() = (s0 + s1, n0 + n1);
        }
    }
    let ys = blocks
        .iter()
        .flat_map(|&(s, n)| std::iter::repeat_n(sign * s / T::from_usize_lossy(n), n));
    let knots = c.knots.iter().zip(ys).map(|(&(x, _), y)| (x, y)).collect();
    CurveSurrogate::from_knots(window, knots)
}
