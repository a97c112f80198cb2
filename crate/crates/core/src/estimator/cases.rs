//! Probabilities of the three byte-boundary cases met by Huffman code writes.
//!
//! The bit position inside the current byte (prefix length mod 8) is modelled
//! as uniform on 0..8, so a write starts on an empty byte with probability
//! exactly 1/8. A write into a partial byte stays within it when the code is
//! no longer than the free bits.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::codelen::CodeLengthDist;
use crate::error::Error;

/// Which closed form computes the case-1 probability.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseVariant {
    /// `Σ_{i=0}^{7} Σ_{j=0}^{i} P(X=j) P(Y=i)` with `Y` uniform.
    DoubleSum,
    /// `Σ_{u=1}^{7} P(used bits = u) P(X <= 8 - u)`, following the writer's state.
    FreeBits,
}

impl CaseVariant {
    pub const ALL: [CaseVariant; 2] = [CaseVariant::DoubleSum, CaseVariant::FreeBits];
}

impl fmt::Display for CaseVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CaseVariant::DoubleSum => "double_sum",
            CaseVariant::FreeBits => "free_bits",
        })
    }
}

impl FromStr for CaseVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "double_sum" => Ok(CaseVariant::DoubleSum),
            "free_bits" => Ok(CaseVariant::FreeBits),
            other => Err(Error::InvalidConfig(format!("unknown case variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CasePrediction {
    pub p1: f64,
    pub p2: f64,
    pub p3: f64,
}

impl CasePrediction {
    pub fn as_array(&self) -> [f64; 3] {
        [self.p1, self.p2, self.p3]
    }

    /// Largest per-case absolute difference.
    pub fn max_abs_diff(&self, observed: [f64; 3]) -> f64 {
        self.as_array()
            .iter()
            .zip(observed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

const P_Y: f64 = 1.0 / 8.0;

pub fn predict_cases(dist: &CodeLengthDist, variant: CaseVariant) -> CasePrediction {
    let p1 = match variant {
        CaseVariant::DoubleSum => (0..8usize)
            .map(|i| (0..=i).map(|j| dist.p(j) * P_Y).sum::<f64>())
            .sum::<f64>(),
        CaseVariant::FreeBits => (1..8usize).map(|used| P_Y * dist.cdf(8 - used)).sum(),
    };
    let p3 = P_Y;
    CasePrediction {
        p1,
        p2: (1.0 - p1 - p3).max(0.0),
        p3,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_mass(len: usize) -> CodeLengthDist {
        let mut p = vec![0.0; len + 1];
        p[len] = 1.0;
        CodeLengthDist::from_probs(p).unwrap()
    }

    #[test]
    fn long_codes_never_fit() {
        for v in CaseVariant::ALL {
            for len in [8, 9, 20] {
                let c = predict_cases(&point_mass(len), v);
                assert_eq!(c.p1, 0.0);
                assert_eq!(c.p3, 0.125);
                assert!((c.p2 - 0.875).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn unit_codes_always_fit() {
        for v in CaseVariant::ALL {
            let c = predict_cases(&point_mass(1), v);
            assert!((c.p1 - 0.875).abs() < 1e-15);
            assert!(c.p2.abs() < 1e-15);
        }
    }

    #[test]
    fn probabilities_sum_to_one() {
        let d = CodeLengthDist::from_probs(vec![0.0, 0.3, 0.2, 0.1, 0.1, 0.1, 0.05, 0.05, 0.05, 0.05]).unwrap();
        for v in CaseVariant::ALL {
            let c = predict_cases(&d, v);
            assert!((c.p1 + c.p2 + c.p3 - 1.0).abs() < 1e-12);
            assert_eq!(c.p3, 0.125);
        }
    }
}
