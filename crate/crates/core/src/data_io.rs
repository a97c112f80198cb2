//! Raw array I/O, synthetic fields and CSV tables.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An n-dimensional grid of finite values, slowest-varying dimension first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    dims: Vec<usize>,
    values: Vec<f64>,
    name: String,
}

impl ScalarField {
    pub fn new(name: impl Into<String>, dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        validate_dims(&dims)?;
        let expected: usize = dims.iter().product();
        if expected != values.len() {
            return Err(Error::SizeMismatch {
                expected: expected as u64,
                found: values.len() as u64,
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        Ok(Self {
            dims,
            values,
            name: name.into(),
        })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    /// Number of elements.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Extents left-padded with 1s to rank 3.
    pub fn dims3(&self) -> [usize; 3] {
        dims3(&self.dims)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    /// Repeats the field `reps[d]` times along each dimension.
    pub fn tile(&self, reps: &[usize]) -> Result<Self> {
        if reps.len() != self.rank() || reps.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "tile repetitions {reps:?} do not match rank {}",
                self.rank()
            )));
        }
        let src = self.dims3();
        let mut r3 = [1usize; 3];
        r3[3 - reps.len()..].copy_from_slice(reps);
        let out3 = [src[0] * r3[0], src[1] * r3[1], src[2] * r3[2]];
        let mut values = Vec::with_capacity(out3.iter().product());
        for i in 0..out3[0] {
            for j in 0..out3[1] {
                for k in 0..out3[2] {
                    let (a, b, c) = (i % src[0], j % src[1], k % src[2]);
                    values.push(self.values[(a * src[1] + b) * src[2] + c]);
                }
            }
        }
        let dims = self.dims.iter().zip(reps).map(|(d, r)| d * r).collect();
        Self::new(self.name.clone(), dims, values)
    }
}

pub(crate) fn dims3(dims: &[usize]) -> [usize; 3] {
    let mut out = [1usize; 3];
    out[3 - dims.len()..].copy_from_slice(dims);
    out
}

pub fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.is_empty() || dims.len() > 3 || dims.contains(&0) {
        return Err(Error::InvalidDims(dims.to_vec()));
    }
    Ok(())
}

/// Parses `512,512,512` (or `512x512x512`).
pub fn parse_dims(s: &str) -> Result<Vec<usize>> {
    let dims = s
        .split([',', 'x'])
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidConfig(format!("bad dimension {t:?} in {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    validate_dims(&dims)?;
    Ok(dims)
}

/// On-disk element type of a headerless raw array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32le,
    F64le,
}

impl Dtype {
    pub fn width(self) -> usize {
        match self {
            Dtype::F32le => 4,
            Dtype::F64le => 8,
        }
    }
}

impl FromStr for Dtype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "f32le" | "f32" | "float32" => Ok(Dtype::F32le),
            "f64le" | "f64" | "float64" => Ok(Dtype::F64le),
            other => Err(Error::InvalidConfig(format!("unknown dtype {other:?}"))),
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dtype::F32le => "f32le",
            Dtype::F64le => "f64le",
        })
    }
}

/// Decodes a little-endian raw buffer.
pub fn decode_raw(bytes: &[u8], dims: &[usize], dtype: Dtype, name: &str) -> Result<ScalarField> {
    validate_dims(dims)?;
    let n: usize = dims.iter().product();
    let expected = (n * dtype.width()) as u64;
    if bytes.len() as u64 != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: bytes.len() as u64,
        });
    }
    let values: Vec<f64> = match dtype {
        Dtype::F32le => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::F64le => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    };
    ScalarField::new(name, dims.to_vec(), values)
}

/// Loads a headerless little-endian array. The field is named after the file stem.
pub fn load_raw(path: impl AsRef<Path>, dims: &[usize], dtype: Dtype) -> Result<ScalarField> {
    let path = path.as_ref();
    validate_dims(dims)?;
    let meta = fs::metadata(path).map_err(|e| Error::io(path, e))?;
    let n: usize = dims.iter().product();
    let expected = (n * dtype.width()) as u64;
    if meta.len() != expected {
        return Err(Error::SizeMismatch {
            expected,
            found: meta.len(),
        });
    }
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    decode_raw(&bytes, dims, dtype, &name)
}

/// Writes the field as a headerless little-endian array. f32 output rounds.
pub fn write_raw(field: &ScalarField, path: impl AsRef<Path>, dtype: Dtype) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = Vec::with_capacity(field.len() * dtype.width());
    match dtype {
        Dtype::F32le => field
            .values()
            .iter()
            .for_each(|&v| bytes.extend_from_slice(&(v as f32).to_le_bytes())),
        Dtype::F64le => field
            .values()
            .iter()
            .for_each(|&v| bytes.extend_from_slice(&v.to_le_bytes())),
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Broadband sum of plane waves, dominated by long wavelengths.
    Smooth,
    /// Smooth background with sharp layered fronts.
    Banded,
    /// i.i.d. uniform values in [0, 1).
    UniformNoise,
    Constant,
}

impl FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "smooth" => Ok(SynthKind::Smooth),
            "banded" => Ok(SynthKind::Banded),
            "uniform_noise" | "noise" => Ok(SynthKind::UniformNoise),
            "constant" => Ok(SynthKind::Constant),
            other => Err(Error::InvalidConfig(format!("unknown synthetic kind {other:?}"))),
        }
    }
}

impl fmt::Display for SynthKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthKind::Smooth => "smooth",
            SynthKind::Banded => "banded",
            SynthKind::UniformNoise => "uniform_noise",
            SynthKind::Constant => "constant",
        })
    }
}

struct PlaneWave {
    k: [f64; 3],
    phase: f64,
    amp: f64,
}

impl PlaneWave {
    fn random(rng: &mut ChaCha8Rng, rank: usize, wavelengths: (f64, f64), amps: (f64, f64)) -> Self {
        let lambda = rng.random_range(wavelengths.0..wavelengths.1);
        Self::with_wavelength(rng, rank, lambda, amps)
    }

    fn with_wavelength(rng: &mut ChaCha8Rng, rank: usize, lambda: f64, amps: (f64, f64)) -> Self {
        let mut dir = [0.0f64; 3];
        loop {
            for d in dir.iter_mut().skip(3 - rank) {
                *d = rng.random_range(-1.0..1.0);
            }
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.2 {
                dir.iter_mut().for_each(|x| *x /= norm);
                break;
            }
        }
        let kmag = TAU / lambda;
        Self {
            k: dir.map(|d| d * kmag),
            phase: rng.random_range(0.0..TAU),
            amp: rng.random_range(amps.0..amps.1),
        }
    }

    /// Adds `amp * shape(sin(k.x + phase))` over the grid using separable complex phasors.
    fn accumulate(&self, dims: [usize; 3], out: &mut [f64], shape: impl Fn(f64) -> f64) {
        let axis = |d: usize, extra: f64| -> Vec<(f64, f64)> {
            (0..dims[d])
                .map(|x| {
                    let t = self.k[d] * x as f64 + extra;
                    (t.cos(), t.sin())
                })
                .collect()
        };
        let e0 = axis(0, 0.0);
        let e1 = axis(1, 0.0);
        let e2 = axis(2, self.phase);
        let mut idx = 0;
        for &(c0, s0) in &e0 {
            for &(c1, s1) in &e1 {
                let (cr, ci) = (c0 * c1 - s0 * s1, c0 * s1 + s0 * c1);
                for &(c2, s2) in &e2 {
                    let im = cr * s2 + ci * c2;
                    out[idx] += self.amp * shape(im);
                    idx += 1;
                }
            }
        }
    }
}

/// Waves with log-uniform wavelengths in `[8, 128]` and amplitude growing as
/// `λ^1.5`, so large scales dominate the values while many short waves share
/// the small-scale variation.
fn broadband(rng: &mut ChaCha8Rng, rank: usize, dims: [usize; 3], out: &mut [f64], waves: usize, gain: f64) {
    let (lo, hi) = (8f64.ln(), 128f64.ln());
    for _ in 0..waves {
        let lambda = rng.random_range(lo..hi).exp();
        let a = gain * (lambda / 128.0).powf(1.5);
        PlaneWave::with_wavelength(rng, rank, lambda, (0.5 * a, a)).accumulate(dims, out, |s| s);
    }
}

/// Deterministic synthetic field. Wavelengths are in grid units so local
/// statistics do not depend on the extents.
pub fn synth_field(kind: SynthKind, dims: &[usize], seed: u64) -> Result<ScalarField> {
    validate_dims(dims)?;
    let d3 = dims3(dims);
    let n: usize = dims.iter().product();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f1e1d);
    let rank = dims.len();
    let values = match kind {
        SynthKind::Constant => vec![1.0; n],
        SynthKind::UniformNoise => (0..n).map(|_| rng.random::<f64>()).collect(),
        SynthKind::Smooth => {
            let mut v = vec![0.0; n];
            broadband(&mut rng, rank, d3, &mut v, 48, 1.0);
            v
        }
        SynthKind::Banded => {
            let mut v = vec![0.0; n];
            broadband(&mut rng, rank, d3, &mut v, 32, 0.5);
            for _ in 0..3 {
                PlaneWave::random(&mut rng, rank, (24.0, 96.0), (0.2, 0.4))
                    .accumulate(d3, &mut v, |s| (6.0 * s).tanh());
            }
            v
        }
    };
    ScalarField::new(format!("{kind}-{seed}"), dims.to_vec(), values)
}

/// One dataset in a manifest file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub dims: Vec<usize>,
    pub dtype: Dtype,
    pub name: String,
}

impl ManifestEntry {
    pub fn load(&self) -> Result<ScalarField> {
        Ok(load_raw(&self.path, &self.dims, self.dtype)?.with_name(self.name.clone()))
    }
}

/// CSV manifest with columns `path,dims,dtype,name`; relative paths resolve
/// against the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut seen = HashSet::new();
        for e in &entries {
            validate_dims(&e.dims)?;
            if !seen.insert(e.path.clone()) {
                return Err(Error::Manifest(format!("duplicate path {}", e.path.display())));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Manifest(format!("missing column {name:?}")))
        };
        let (cp, cd, ct, cn) = (col("path")?, col("dims")?, col("dtype")?, col("name")?);
        let mut entries = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let raw = PathBuf::from(&rec[cp]);
            let path = if raw.is_absolute() { raw } else { base.join(raw) };
            entries.push(ManifestEntry {
                path,
                dims: parse_dims(&rec[cd])?,
                dtype: rec[ct].parse()?,
                name: rec[cn].to_string(),
            });
        }
        Self::new(entries)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut t = Table::new(["path", "dims", "dtype", "name"]);
        for e in &self.entries {
            let dims = e.dims.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
            t.push(vec![
                Cell::Text(e.path.display().to_string()),
                Cell::Text(dims),
                Cell::Text(e.dtype.to_string()),
                Cell::Text(e.name.clone()),
            ]);
        }
        write_csv(&t, path)
    }
}

/// A CSV cell. Floats print in shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::Num(x) => write!(f, "{x}"),
            Cell::Int(i) => write!(f, "{i}"),
            Cell::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv_writer(Vec::new());
        self.write_into(&mut w)?;
        let bytes = w
            .into_inner()
            .map_err(|e| Error::InvalidConfig(format!("csv flush: {e}")))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn write_into<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|c| c.to_string()))?;
        }
        w.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    /// Reads a CSV back as text cells.
    pub fn read_csv(path: impl AsRef<Path>) -> Result<Table> {
        let mut rdr = csv::Reader::from_path(path.as_ref())?;
        let header = rdr.headers()?.iter().map(String::from).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|r| r.iter().map(|s| Cell::Text(s.to_string())).collect()))
            .collect::<std::result::Result<_, _>>()?;
        Ok(Table { header, rows })
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }
}

fn csv_writer<W: std::io::Write>(inner: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(inner)
}

/// Writes the header row followed by the rows in order, LF line endings.
pub fn write_csv(table: &Table, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv_writer(file);
    table.write_into(&mut w)
}
