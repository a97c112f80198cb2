use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

use super::linear::fit_linear;

const MIN_SEGMENT_POINTS: usize = 3;

/// Affine throughput `intercept + slope · ratio` on one ratio interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct Segment<T> {
    pub intercept: T,
    pub slope: T,
}

/// Throughput (bytes/s) as a piecewise-affine function of lossless ratio.
/// Segment `i` covers `[breakpoints[i-1], breakpoints[i])`; the first and last
/// extend to the ends of the ratio axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real", deny_unknown_fields)]
pub struct PiecewiseThroughput<T> {
    pub breakpoints: Vec<T>,
    pub segments: Vec<Segment<T>>,
    /// Lower clamp, half the smallest observed throughput.
    pub floor: T,
}

impl<T: Real> PiecewiseThroughput<T> {
    pub fn validate(&self) -> Result<()> {
        if self.segments.len() != self.breakpoints.len() + 1 {
            return Err(Error::ModelFormat("piecewise needs one more segment than breakpoints".into()));
        }
        if self.breakpoints.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ModelFormat("breakpoints must increase".into()));
        }
        if !(self.floor > T::zero() && self.floor.is_finite()) {
            return Err(Error::ModelFormat("throughput floor must be positive".into()));
        }
        let finite = |s: &Segment<T>| s.intercept.is_finite() && s.slope.is_finite();
        if !self.segments.iter().all(finite) || !self.breakpoints.iter().all(|b| b.is_finite()) {
            return Err(Error::ModelFormat("non-finite piecewise parameter".into()));
        }
        Ok(())
    }

    pub fn segment_index(&self, ratio: T) -> usize {
        self.breakpoints.partition_point(|&b| b <= ratio)
    }

    pub fn eval(&self, ratio: T) -> T {
        let s = self.segments[self.segment_index(ratio)];
        (s.intercept + s.slope * ratio).max(self.floor)
    }
}

struct Candidate<T> {
    breaks: Vec<T>,
    segments: Vec<Segment<T>>,
    sse: T,
}

/// Fits 1 to `max_breaks + 1` affine segments joined continuously at the
/// breakpoints. Breakpoint candidates are the sample deciles and every
/// segment needs at least three samples. The count is chosen by minimizing
/// `SSE + segments · 2σ̂²`, with σ̂² taken from the residuals of the most
/// flexible fit.
pub fn fit_piecewise<T: Real>(samples: &[(T, T)], max_breaks: usize) -> Result<PiecewiseThroughput<T>> {
    if samples.len() < 6 {
        return Err(Error::InsufficientData(format!(
            "piecewise fit needs 6 samples, got {}",
            samples.len()
        )));
    }
    if samples.iter().any(|(x, y)| !x.is_finite() || !y.is_finite() || *y <= T::zero()) {
        return Err(Error::DegenerateFit("throughput samples must be finite and positive".into()));
    }
    let mut s = samples.to_vec();
    s.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.partial_cmp(&b.1).unwrap()));
    let n = s.len();

    let mut grid: Vec<T> = (1..10)
        .map(|q| s[(q * n / 10).min(n - 1)].0)
        .collect();
    grid.dedup();

    // continuous fit: y = a + b·x + Σ c_j·(x − break_j)+
    let fit_breaks = |breaks: &[T]| -> Option<Candidate<T>> {
        let mut start = 0;
        for k in 0..=breaks.len() {
            let end = breaks.get(k).map_or(n, |&b| s.partition_point(|p| p.0 < b));
            if end - start < MIN_SEGMENT_POINTS {
                return None;
            }
            start = end;
        }
        let x: Vec<Vec<T>> = s
            .iter()
            .map(|&(r, _)| {
                std::iter::once(r)
                    .chain(breaks.iter().map(|&b| (r - b).max(T::zero())))
                    .collect()
            })
            .collect();
        let y: Vec<T> = s.iter().map(|p| p.1).collect();
        let names = vec!["x"; breaks.len() + 1];
        let fit = fit_linear(&x, &y, &names).ok()?;
        let c = fit.coefs();
        let mut segments = Vec::with_capacity(breaks.len() + 1);
        let (mut a, mut b) = (fit.intercept(), c[0]);
        segments.push(Segment { intercept: a, slope: b });
        for (j, &bp) in breaks.iter().enumerate() {
            a = a - c[j + 1] * bp;
            b = b + c[j + 1];
            segments.push(Segment { intercept: a, slope: b });
        }
        let sse = x
            .iter()
            .zip(&y)
            .map(|(row, &yi)| {
                let e = yi - fit.predict(row);
                e * e
            })
            .sum();
        Some(Candidate {
            breaks: breaks.to_vec(),
            segments,
            sse,
        })
    };

    let mut by_count: Vec<Option<Candidate<T>>> = Vec::new();
    for k in 0..=max_breaks.min(2) {
        let mut best: Option<Candidate<T>> = None;
        let mut consider = |c: Option<Candidate<T>>| {
            if let Some(c) = c {
                if best.as_ref().is_none_or(|b| c.sse < b.sse) {
                    best = Some(c);
                }
            }
        };
        match k {
            0 => consider(fit_breaks(&[])),
            1 => grid.iter().for_each(|&b| consider(fit_breaks(&[b]))),
            _ => {
                for i in 0..grid.len() {
                    for j in i + 1..grid.len() {
                        consider(fit_breaks(&[grid[i], grid[j]]));
                    }
                }
            }
        }
        by_count.push(best);
    }

    let richest = by_count.iter().rev().flatten().next().expect("zero-break fit always exists");
    let dof = n.saturating_sub(2 * richest.segments.len()).max(1);
    let sigma2 = richest.sse / T::from_usize_lossy(dof);
    let cost = |c: &Candidate<T>| c.sse + T::from_usize_lossy(c.segments.len()) * T::lit(2.0) * sigma2;
    let mut chosen: Option<&Candidate<T>> = None;
    for c in by_count.iter().flatten() {
        if chosen.is_none_or(|b| cost(c) < cost(b)) {
            chosen = Some(c);
        }
    }
    let c = chosen.expect("at least one candidate");
    let min_y = s.iter().map(|p| p.1).fold(T::infinity(), T::min);
    let model = PiecewiseThroughput {
        breakpoints: c.breaks.clone(),
        segments: c.segments.clone(),
        floor: min_y / T::lit(2.0),
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn affine_is_one_segment() {
        let s: Vec<(f64, f64)> = (0..20).map(|i| (1.0 + i as f64 * 0.5, 100.0 + 7.0 * i as f64)).collect();
        let m = fit_piecewise(&s, 2).unwrap();
        assert!(m.breakpoints.is_empty());
        for &(x, y) in &s {
            assert!((m.eval(x) - y).abs() < 1e-9);
        }
    }

    #[test]
    fn constant_throughput() {
        let s: Vec<(f64, f64)> = (0..10).map(|i| (1.0 + i as f64, 5e8)).collect();
        let m = fit_piecewise(&s, 2).unwrap();
        assert_eq!(m.segments.len(), 1);
        assert!((m.eval(3.3) - 5e8).abs() < 1e-3);
    }

    #[test]
    fn floor_clamps() {
        let s: Vec<(f64, f64)> = (0..10).map(|i| (1.0 + i as f64, 100.0 + 10.0 * i as f64)).collect();
        let m = fit_piecewise(&s, 0).unwrap();
        assert_eq!(m.eval(-1e6), 50.0);
    }

    #[test]
    fn too_few_samples() {
        assert!(fit_piecewise(&[(1.0f64, 1.0); 5], 2).is_err());
    }
}
