//! Self-describing archive container.
//!
//! Layout (little-endian): magic `CTM1` | rank u8 | dims u64×rank |
//! predictor u8 | eb f64 | quant_radius u32 | lossless u8 | outlier_count u64 |
//! outliers f64×count | codebook entry count u32 | (code u32, length u8)×count |
//! payload_len u64 | payload.

use crate::error::{Error, Result};

use super::{Lossless, Predictor};

pub const MAGIC: &[u8; 4] = b"CTM1";

#[derive(Debug, Clone, PartialEq)]
pub struct Archive {
    pub dims: Vec<usize>,
    pub predictor: Predictor,
    pub eb: f64,
    pub quant_radius: u32,
    pub lossless: Lossless,
    pub outliers: Vec<f64>,
    /// `(code, length)` in canonical order.
    pub codebook: Vec<(u32, u8)>,
    /// Lossless-stage output.
    pub payload: Vec<u8>,
}

impl Archive {
    pub fn header_len(&self) -> usize {
        4 + 1 + 8 * self.dims.len() + 1 + 8 + 4 + 1 + 8 + 8 * self.outliers.len() + 4 + 5 * self.codebook.len() + 8
    }

    pub fn byte_len(&self) -> usize {
        self.header_len() + self.payload.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(MAGIC);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        out.push(self.predictor as u8);
        out.extend_from_slice(&self.eb.to_le_bytes());
        out.extend_from_slice(&self.quant_radius.to_le_bytes());
        out.push(self.lossless as u8);
        out.extend_from_slice(&(self.outliers.len() as u64).to_le_bytes());
        for &v in &self.outliers {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.codebook.len() as u32).to_le_bytes());
        for &(code, len) in &self.codebook {
            out.extend_from_slice(&code.to_le_bytes());
            out.push(len);
        }
        out.extend_from_slice(&(self.payload.len() as u64).to_le_bytes());
        out.extend_from_slice(&self.payload);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Corrupt("bad magic".into()));
        }
        let rank = r.u8()? as usize;
        if !(1..=3).contains(&rank) {
            return Err(Error::Corrupt(format!("rank {rank}")));
        }
        let dims = (0..rank)
            .map(|_| r.u64().map(|d| d as usize))
            .collect::<Result<Vec<_>>>()?;
        if dims.contains(&0) {
            return Err(Error::Corrupt("zero extent".into()));
        }
        let predictor = Predictor::from_u8(r.u8()?)
            .ok_or_else(|| Error::Corrupt("unknown predictor".into()))?;
        let eb = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
        if !(eb > 0.0 && eb.is_finite()) {
            return Err(Error::Corrupt(format!("error bound {eb}")));
        }
        let quant_radius = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if quant_radius < 2 {
            return Err(Error::Corrupt(format!("quant radius {quant_radius}")));
        }
        let lossless = Lossless::from_u8(r.u8()?)
            .ok_or_else(|| Error::Corrupt("unknown lossless choice".into()))?;
        let n_out = r.u64()? as usize;
        let raw = r.take(n_out.checked_mul(8).ok_or_else(|| Error::Corrupt("outlier count".into()))?)?;
        let outliers = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let n_book = u32::from_le_bytes(r.take(4)?.try_into().unwrap()) as usize;
        let mut codebook = Vec::with_capacity(n_book.min(1 << 20));
        for _ in 0..n_book {
            let code = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
            codebook.push((code, r.u8()?));
        }
        let plen = r.u64()? as usize;
        let payload = r.take(plen)?.to_vec();
        if r.pos != bytes.len() {
            return Err(Error::Corrupt("trailing bytes".into()));
        }
        Ok(Self {
            dims,
            predictor,
            eb,
            quant_radius,
            lossless,
            outliers,
            codebook,
            payload,
        })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Corrupt("archive truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
