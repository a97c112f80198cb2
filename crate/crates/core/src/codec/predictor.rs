//! Prediction traversals shared by compression, decompression and the estimator.
//!
//! A traversal visits every grid point exactly once in a fixed order and hands
//! the visitor the point's linear index together with a prediction computed from
//! already reconstructed values. The visitor returns the reconstructed value,
//! which later predictions read. Compression quantizes inside the visitor,
//! decompression dequantizes, so both sides see identical predictions.

/// Lorenzo traversal in row-major order over `dims` (rank padded to 3).
///
/// Missing neighbours outside the grid read as zero, which reduces the 3-D
/// stencil to the 2-D/1-D stencils on boundary planes and lines.
pub fn lorenzo_traverse(dims: [usize; 3], mut visit: impl FnMut(usize, f64) -> f64) {
    let [n0, n1, n2] = dims;
    let (p1, p2) = (n1 + 1, n2 + 1);
    let s0 = p1 * p2;
    let s1 = p2;
    let mut r = vec![0.0f64; (n0 + 1) * s0];
    let mut idx = 0usize;
    for i in 0..n0 {
        for j in 0..n1 {
            let row = (i + 1) * s0 + (j + 1) * s1 + 1;
            for p in row..row + n2 {
                let pred = r[p - s0] + r[p - s1] + r[p - 1]
                    - r[p - s0 - s1]
                    - r[p - s0 - 1]
                    - r[p - s1 - 1]
                    + r[p - s0 - s1 - 1];
                r[p] = visit(idx, pred);
                idx += 1;
            }
        }
    }
}

#[inline]
fn cubic(a: f64, b: f64, c: f64, d: f64) -> f64 {
    (-a + 9.0 * b + 9.0 * c - d) * (1.0 / 16.0)
}

/// Multilevel spline interpolation traversal.
///
/// Visitors see row-major indices into the grid. Level strides halve from
/// the first power of two covering every extent down to 1; within a level the
/// dimensions are swept in order. A point on a line is predicted from neighbours at ±s and
/// ±3s with the cubic (-1, 9, 9, -1)/16 stencil, falling back to linear
/// interpolation near the far boundary and to linear extrapolation past it.
///
/// Points of one (level, dimension) pass never read each other, so passes
/// across the slower dimensions walk plane by plane with the innermost loop
/// along memory.
pub fn interp_traverse(dims: [usize; 3], mut visit: impl FnMut(usize, f64) -> f64) {
    let strides = [dims[1] * dims[2], dims[2], 1];
    // padded working layout: the stencil streams of a pass sit whole rows or
    // planes apart, and unpadded power-of-two extents would put them all in
    // the same cache sets
    let row = dims[2] + if dims[2] >= 64 { ROW_PAD } else { 0 };
    let plane = dims[1] * row + if dims[1] * row >= 4096 { PLANE_PAD } else { 0 };
    let pstrides = [plane, row, 1];
    let mut r = vec![0.0f64; dims[0] * plane];
    r[0] = visit(0, 0.0);
    let top = dims.iter().copied().max().unwrap_or(1).next_power_of_two();
    let mut s = top / 2;
    while s >= 1 {
        for d in 0..3 {
            let n = dims[d];
            if s >= n {
                continue;
            }
            let (e0, e1) = match d {
                0 => (1, 2),
                1 => (0, 2),
                _ => (0, 1),
            };
            let step = |e: usize| if e < d { s } else { 2 * s };
            let (st0, st1) = (step(e0), step(e1));
            let sd = pstrides[d] * s;
            if d == 2 {
                // lines along memory
                let mut a = 0;
                while a < dims[e0] {
                    let mut b = 0;
                    while b < dims[e1] {
                        let (base, pbase) = (
                            a * strides[e0] + b * strides[e1],
                            a * pstrides[e0] + b * pstrides[e1],
                        );
                        let mut i = s;
                        while i < n {
                            let p = pbase + i;
                            r[p] = visit(base + i, Stencil::at(i, s, n).apply(&r, p, sd));
                            i += 2 * s;
                        }
                        b += st1;
                    }
                    a += st0;
                }
            } else {
                // planes across the line direction, innermost loop along memory
                let mut i = s;
                while i < n {
                    let stencil = Stencil::at(i, s, n);
                    let mut a = 0;
                    while a < dims[e0] {
                        let base = i * strides[d] + a * strides[e0];
                        let pbase = i * pstrides[d] + a * pstrides[e0];
                        let mut b = 0;
                        while b < dims[e1] {
                            let p = pbase + b * pstrides[e1];
                            r[p] = visit(base + b * strides[e1], stencil.apply(&r, p, sd));
                            b += st1;
                        }
                        a += st0;
                    }
                    i += 2 * s;
                }
            }
        }
        s /= 2;
    }
}

const ROW_PAD: usize = 8;
const PLANE_PAD: usize = 24;

/// Which neighbours along the line a point at offset `i` can use.
#[derive(Clone, Copy)]
enum Stencil {
    Cubic,
    Linear,
    Extrapolate,
    Copy,
}

impl Stencil {
    #[inline]
    fn at(i: usize, s: usize, n: usize) -> Self {
        if i + s < n {
            if i >= 3 * s && i + 3 * s < n {
                Stencil::Cubic
            } else {
                Stencil::Linear
            }
        } else if i >= 3 * s {
            Stencil::Extrapolate
        } else {
            Stencil::Copy
        }
    }

    #[inline]
    fn apply(self, r: &[f64], p: usize, sd: usize) -> f64 {
        match self {
            Stencil::Cubic => cubic(r[p - 3 * sd], r[p - sd], r[p + sd], r[p + 3 * sd]),
            Stencil::Linear => 0.5 * (r[p - sd] + r[p + sd]),
            Stencil::Extrapolate => 1.5 * r[p - sd] - 0.5 * r[p - 3 * sd],
            Stencil::Copy => r[p - sd],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lorenzo_visits_each_point_once_in_order() {
        let dims = [3, 4, 5];
        let mut seen = Vec::new();
        lorenzo_traverse(dims, |i, _| {
            seen.push(i);
            0.0
        });
        assert_eq!(seen, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn lorenzo_is_exact_on_trilinear_data() {
        // f = a + bx + cy + dz has zero mixed third difference away from the origin planes
        let dims = [4, 5, 6];
        let f = |i: usize, j: usize, k: usize| 1.0 + 2.0 * i as f64 - 0.5 * j as f64 + 3.0 * k as f64;
        let mut vals = Vec::new();
        for i in 0..4 {
            for j in 0..5 {
                for k in 0..6 {
                    vals.push(f(i, j, k));
                }
            }
        }
        lorenzo_traverse(dims, |idx, pred| {
            let (i, j, k) = (idx / 30, (idx / 6) % 5, idx % 6);
            if i > 0 && j > 0 && k > 0 {
                assert!((pred - vals[idx]).abs() < 1e-12);
            }
            vals[idx]
        });
    }

    #[test]
    fn lorenzo_1d_uses_previous_value() {
        let vals = [3.0, 5.0, 4.0];
        let mut preds = Vec::new();
        lorenzo_traverse([1, 1, 3], |i, p| {
            preds.push(p);
            vals[i]
        });
        assert_eq!(preds, vec![0.0, 3.0, 5.0]);
    }

    fn interp_visit_order(dims: [usize; 3]) -> Vec<usize> {
        let mut seen = Vec::new();
        interp_traverse(dims, |i, _| {
            seen.push(i);
            1.0
        });
        seen
    }

    #[test]
    fn interp_visits_each_point_exactly_once() {
        for dims in [[1, 1, 1], [1, 1, 17], [1, 9, 6], [5, 7, 3], [16, 16, 16], [2, 33, 1]] {
            let n: usize = dims.iter().product();
            let mut order = interp_visit_order(dims);
            assert_eq!(order.len(), n, "{dims:?}");
            order.sort_unstable();
            order.dedup();
            assert_eq!(order.len(), n, "{dims:?}");
        }
    }

    /// Line-by-line sweep over an unpadded NaN-initialized buffer.
    fn reference_interp(dims: [usize; 3], value: impl Fn(usize) -> f64) -> Vec<f64> {
        let n_all: usize = dims.iter().product();
        let strides = [dims[1] * dims[2], dims[2], 1];
        let mut r = vec![f64::NAN; n_all];
        let mut preds = vec![f64::NAN; n_all];
        preds[0] = 0.0;
        r[0] = value(0);
        let mut s = dims.iter().copied().max().unwrap().next_power_of_two() / 2;
        while s >= 1 {
            for d in 0..3 {
                let n = dims[d];
                if s >= n {
                    continue;
                }
                let others: Vec<usize> = (0..3).filter(|&e| e != d).collect();
                let step = |e: usize| if e < d { s } else { 2 * s };
                for a in (0..dims[others[0]]).step_by(step(others[0])) {
                    for b in (0..dims[others[1]]).step_by(step(others[1])) {
                        for i in (s..n).step_by(2 * s) {
                            let p = a * strides[others[0]] + b * strides[others[1]] + i * strides[d];
                            let sd = strides[d] * s;
                            preds[p] = Stencil::at(i, s, n).apply(&r, p, sd);
                            assert!(preds[p].is_finite(), "read before write at {p}");
                            r[p] = value(p);
                        }
                    }
                }
            }
            s /= 2;
        }
        preds
    }

    #[test]
    fn interp_matches_line_sweep_reference() {
        let value = |i: usize| (i as f64 * 0.37).sin() + 0.01 * i as f64;
        for dims in [[9, 10, 11], [1, 1, 70], [1, 66, 65], [3, 70, 65], [2, 5, 130]] {
            let want = reference_interp(dims, value);
            let mut got = vec![f64::NAN; want.len()];
            interp_traverse(dims, |i, pred| {
                got[i] = pred;
                value(i)
            });
            assert_eq!(got, want, "{dims:?}");
        }
    }

    #[test]
    fn interp_cubic_is_exact_on_cubic_polynomials_in_the_interior() {
        let n = 33;
        let f = |x: f64| 0.5 + x - 0.02 * x * x + 0.001 * x * x * x;
        interp_traverse([1, 1, n], |i, pred| {
            let s = 1usize << (i.trailing_zeros().min(5));
            if i >= 3 * s && i + 3 * s < n && i % (2 * s) != 0 {
                assert!((pred - f(i as f64)).abs() < 1e-9, "i={i}");
            }
            f(i as f64)
        });
    }
}
