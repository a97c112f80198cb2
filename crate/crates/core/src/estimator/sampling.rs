//! Block sampling of a field for pre-compression characterization.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::Predictor;
use crate::data_io::ScalarField;
use crate::error::{Error, Result};

/// How the context around a sampled core block is extracted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Context {
    /// One extra layer on the low side of every dimension so causal stencils
    /// (Lorenzo) see reconstructed neighbours for every core point.
    LowHalo,
    /// `m` extra layers on both sides. Blocks start on multiples of the block
    /// side and `m` is a multiple of 4, so the two finest interpolation levels
    /// line up with the full-field sweep and get their full cubic stencils.
    Margin(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockLayout {
    pub side: usize,
    pub context: Context,
}

impl BlockLayout {
    pub fn for_predictor(predictor: Predictor, rank: usize) -> Self {
        match predictor {
            Predictor::Lorenzo => Self {
                side: if rank == 1 { 64 } else { 8 },
                context: Context::LowHalo,
            },
            Predictor::Interpolation => Self {
                side: if rank == 1 { 256 } else { 16 },
                context: Context::Margin(4),
            },
        }
    }
}

/// A sampled sub-grid: a core region whose codes are counted, plus the
/// surrounding context that is compressed alongside it but not counted.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    /// Core origin in (rank-3 padded) field coordinates.
    pub origin: [usize; 3],
    pub core: [usize; 3],
    /// Offset of the core inside the context box.
    pub core_offset: [usize; 3],
    pub ctx_dims: [usize; 3],
    /// Context values, row-major.
    pub values: Vec<f64>,
}

impl SampleBlock {
    pub fn core_len(&self) -> usize {
        self.core.iter().product()
    }

    /// Fills `mask` with one flag per context point, set on core points.
    pub fn core_mask(&self, mask: &mut Vec<bool>) {
        let [c0, c1, c2] = self.ctx_dims;
        let [o0, o1, o2] = self.core_offset;
        let [n0, n1, n2] = self.core;
        mask.clear();
        mask.resize(c0 * c1 * c2, false);
        for i in o0..o0 + n0 {
            for j in o1..o1 + n1 {
                let row = (i * c1 + j) * c2;
                mask[row + o2..row + o2 + n2].fill(true);
            }
        }
    }

    /// Whether a linear index into the context box lies in the core.
    #[inline]
    pub fn is_core(&self, idx: usize) -> bool {
        let [_, c1, c2] = self.ctx_dims;
        let k = idx % c2;
        let j = (idx / c2) % c1;
        let i = idx / (c1 * c2);
        let inside = |x: usize, d: usize| x >= self.core_offset[d] && x < self.core_offset[d] + self.core[d];
        inside(i, 0) && inside(j, 1) && inside(k, 2)
    }
}

/// Picks blocks of the field's block partition, one per equal-width stratum of
/// the row-major block order, so the sample is spread through the whole field.
/// `sample_rate == 1` returns every block of the partition.
pub fn sample_blocks(
    field: &ScalarField,
    sample_rate: f64,
    seed: u64,
    layout: BlockLayout,
) -> Result<Vec<SampleBlock>> {
    if !(sample_rate > 0.0 && sample_rate <= 1.0) {
        return Err(Error::InvalidConfig(format!("sample rate must be in (0, 1], got {sample_rate}")));
    }
    let dims = field.dims3();
    let side = layout.side.max(1);
    let bdims = dims.map(|n| side.min(n));
    let counts = [0, 1, 2].map(|d| dims[d].div_ceil(bdims[d]));
    let total: usize = counts.iter().product();
    let picks = if sample_rate >= 1.0 {
        (0..total).collect::<Vec<_>>()
    } else {
        let nb = ((sample_rate * total as f64).round() as usize).clamp(1, total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..nb)
            .map(|i| {
                let lo = i * total / nb;
                let hi = ((i + 1) * total / nb).max(lo + 1);
                rng.random_range(lo..hi)
            })
            .collect()
    };
    Ok(picks
        .into_iter()
        .map(|b| {
            let cell = [b / (counts[1] * counts[2]), (b / counts[2]) % counts[1], b % counts[2]];
            extract(field.values(), dims, cell, bdims, layout.context)
        })
        .collect())
}

fn extract(values: &[f64], dims: [usize; 3], cell: [usize; 3], bdims: [usize; 3], ctx: Context) -> SampleBlock {
    let origin = [0, 1, 2].map(|d| cell[d] * bdims[d]);
    let core = [0, 1, 2].map(|d| bdims[d].min(dims[d] - origin[d]));
    let (lo, hi) = match ctx {
        Context::LowHalo => (
            [0, 1, 2].map(|d| origin[d].saturating_sub(1)),
            [0, 1, 2].map(|d| origin[d] + core[d]),
        ),
        Context::Margin(m) => (
            [0, 1, 2].map(|d| origin[d].saturating_sub(m)),
            [0, 1, 2].map(|d| (origin[d] + core[d] + m).min(dims[d])),
        ),
    };
    let ctx_dims = [0, 1, 2].map(|d| hi[d] - lo[d]);
    let mut out = Vec::with_capacity(ctx_dims.iter().product());
    for i in lo[0]..hi[0] {
        for j in lo[1]..hi[1] {
            let row = (i * dims[1] + j) * dims[2];
            out.extend_from_slice(&values[row + lo[2]..row + hi[2]]);
        }
    }
    SampleBlock {
        origin,
        core,
        core_offset: [0, 1, 2].map(|d| origin[d] - lo[d]),
        ctx_dims,
        values: out,
    }
}
