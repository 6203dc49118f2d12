//! Bilinear pooling of feature maps and its compact Tensor Sketch
//! approximation.
//!
//! The exact descriptor sums the outer product `x x^T` of every cell's
//! channel vector. Tensor Sketch replaces it with the circular convolution of
//! two independent count sketches of `x`, whose inner products approximate
//! `<x, y>^2` without ever forming the `C^2` outer product.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::Rng;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::rng;

/// Spatial grid of channel vectors, row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl FeatureMap {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::SizeMismatch(format!(
                "feature map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("feature map has non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn cell_count(&self) -> usize {
        self.height * self.width
    }

    /// Channel vector of the cell at `(x, y)`.
    pub fn cell_at(&self, x: usize, y: usize) -> &[f32] {
        self.cell(y * self.width + x)
    }

    /// Channel vector of cell `i` in row-major order.
    pub fn cell(&self, i: usize) -> &[f32] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }

    pub fn cells(&self) -> impl Iterator<Item = &[f32]> {
        self.data.chunks_exact(self.channels.max(1)).take(self.cell_count())
    }
}

/// Hash and sign tables for the two count sketches.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SketchParams {
    pub d: usize,
    pub h1: Vec<usize>,
    pub h2: Vec<usize>,
    pub s1: Vec<i8>,
    pub s2: Vec<i8>,
    pub seed: u64,
}

impl SketchParams {
    /// Draws tables for `channels` inputs and output dimension `d`, which must
    /// be a power of two.
    pub fn new(channels: usize, d: usize, seed: u64) -> Result<Self> {
        if !d.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "sketch dimension must be a power of two, got {d}"
            )));
        }
        let mut r = rng::stream(seed, &[0x5ce7c4]);
        let hash = |r: &mut rand_chacha::ChaCha8Rng| (0..channels).map(|_| r.random_range(0..d)).collect::<Vec<_>>();
        let h1 = hash(&mut r);
        let h2 = hash(&mut r);
        let sign = |r: &mut rand_chacha::ChaCha8Rng| {
            (0..channels)
                .map(|_| if r.random::<bool>() { 1 } else { -1 })
                .collect::<Vec<i8>>()
        };
        let s1 = sign(&mut r);
        let s2 = sign(&mut r);
        Ok(Self {
            d,
            h1,
            h2,
            s1,
            s2,
            seed,
        })
    }

    pub fn channels(&self) -> usize {
        self.h1.len()
    }

    fn validate(&self) -> Result<()> {
        let c = self.h1.len();
        if self.h2.len() != c || self.s1.len() != c || self.s2.len() != c {
            return Err(Error::SizeMismatch("sketch tables differ in length".into()));
        }
        if !self.d.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "sketch dimension must be a power of two, got {}",
                self.d
            )));
        }
        if self.h1.iter().chain(&self.h2).any(|h| *h >= self.d)
            || self.s1.iter().chain(&self.s2).any(|s| s.abs() != 1)
        {
            return Err(Error::InvalidData("sketch table entry out of range".into()));
        }
        Ok(())
    }
}

/// Pooled descriptor vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Descriptor {
    pub values: Vec<f32>,
}

impl Descriptor {
    pub fn new(values: Vec<f32>) -> Self {
        Self { values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn dot(&self, other: &Descriptor) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| f64::from(*a) * f64::from(*b))
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }
}

/// Sum over cells of the outer product of each cell's channel vector,
/// flattened row-major (`C^2` values).
pub fn exact_bilinear(map: &FeatureMap) -> Descriptor {
    let c = map.channels();
    let mut acc = vec![0.0f64; c * c];
    for x in map.cells() {
        for i in 0..c {
            let xi = f64::from(x[i]);
            if xi == 0.0 {
                continue;
            }
            let row = &mut acc[i * c..(i + 1) * c];
            for (slot, xj) in row.iter_mut().zip(x) {
                *slot += xi * f64::from(*xj);
            }
        }
    }
    Descriptor::new(acc.into_iter().map(|v| v as f32).collect())
}

/// `out[k] = sum over c with hash[c] == k of sign[c] * x[c]`.
pub fn count_sketch(x: &[f32], hash: &[usize], sign: &[i8], d: usize) -> Result<Vec<f64>> {
    if hash.len() != x.len() || sign.len() != x.len() {
        return Err(Error::SizeMismatch(format!(
            "count sketch tables have {} / {} entries for {} inputs",
            hash.len(),
            sign.len(),
            x.len()
        )));
    }
    if let Some(h) = hash.iter().find(|h| **h >= d) {
        return Err(Error::InvalidData(format!("hash bucket {h} out of range for d={d}")));
    }
    let mut out = vec![0.0; d];
    for ((v, h), s) in x.iter().zip(hash).zip(sign) {
        out[*h] += f64::from(*s) * f64::from(*v);
    }
    Ok(out)
}

/// Reusable Tensor Sketch evaluator holding the FFT plans for one parameter
/// set.
pub struct TensorSketcher {
    params: SketchParams,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TensorSketcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TensorSketcher")
            .field("d", &self.params.d)
            .field("channels", &self.params.channels())
            .finish()
    }
}

impl TensorSketcher {
    pub fn new(params: SketchParams) -> Result<Self> {
        params.validate()?;
        let mut planner = FftPlanner::new();
        Ok(Self {
            forward: planner.plan_fft_forward(params.d),
            inverse: planner.plan_fft_inverse(params.d),
            params,
        })
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.params.d
    }

    /// Adds the spectrum `DFT(cs1(x)) * DFT(cs2(x))` of one cell to `acc`.
    ///
    /// Both count sketches are real, so they share one complex transform:
    /// with `z = cs1 + i cs2`, `DFT(cs1)_k = (Z_k + conj(Z_-k)) / 2` and
    /// `DFT(cs2)_k = (Z_k - conj(Z_-k)) / 2i`.
    fn accumulate_cell(&self, x: &[f32], buf: &mut [Complex<f64>], acc: &mut [Complex<f64>]) -> Result<()> {
        let p = &self.params;
        if x.len() != p.channels() {
            return Err(Error::SizeMismatch(format!(
                "cell has {} channels, sketch expects {}",
                x.len(),
                p.channels()
            )));
        }
        buf.fill(Complex::new(0.0, 0.0));
        for (c, v) in x.iter().enumerate() {
            let v = f64::from(*v);
            buf[p.h1[c]].re += f64::from(p.s1[c]) * v;
            buf[p.h2[c]].im += f64::from(p.s2[c]) * v;
        }
        self.forward.process(buf);
        let d = p.d;
        for k in 0..d {
            let zk = buf[k];
            let zn = buf[(d - k) % d].conj();
            let a = (zk + zn) * 0.5;
            let b = (zk - zn) * Complex::new(0.0, -0.5);
            acc[k] += a * b;
        }
        Ok(())
    }

    /// Inverse transform of an accumulated spectrum. Returns the real part and
    /// the largest imaginary residue.
    fn finish(&self, mut acc: Vec<Complex<f64>>) -> (Vec<f64>, f64) {
        self.inverse.process(&mut acc);
        let scale = 1.0 / self.params.d as f64;
        let residue = acc.iter().map(|z| (z.im * scale).abs()).fold(0.0, f64::max);
        (acc.into_iter().map(|z| z.re * scale).collect(), residue)
    }

    pub fn cell(&self, x: &[f32]) -> Result<Vec<f64>> {
        self.cell_with_residue(x).map(|(v, _)| v)
    }

    pub fn cell_with_residue(&self, x: &[f32]) -> Result<(Vec<f64>, f64)> {
        let d = self.params.d;
        let mut buf = vec![Complex::new(0.0, 0.0); d];
        let mut acc = vec![Complex::new(0.0, 0.0); d];
        self.accumulate_cell(x, &mut buf, &mut acc)?;
        Ok(self.finish(acc))
    }

    /// Sum of the cell sketches over every cell of `map`, accumulated in the
    /// frequency domain in row-major cell order.
    pub fn pool(&self, map: &FeatureMap) -> Result<Descriptor> {
        let d = self.params.d;
        let mut buf = vec![Complex::new(0.0, 0.0); d];
        let mut acc = vec![Complex::new(0.0, 0.0); d];
        for cell in map.cells() {
            self.accumulate_cell(cell, &mut buf, &mut acc)?;
        }
        let (values, _) = self.finish(acc);
        Ok(Descriptor::new(values.into_iter().map(|v| v as f32).collect()))
    }
}

/// Circular convolution of the two count sketches of `x`, via the DFT.
pub fn tensor_sketch_cell(x: &[f32], params: &SketchParams) -> Result<Vec<f64>> {
    TensorSketcher::new(params.clone())?.cell(x)
}

/// Sum of [`tensor_sketch_cell`] over all spatial cells.
pub fn tensor_sketch_pool(map: &FeatureMap, params: &SketchParams) -> Result<Descriptor> {
    TensorSketcher::new(params.clone())?.pool(map)
}

/// Element-wise product of per-segment feature maps.
pub fn aggregate_segments(maps: &[FeatureMap]) -> Result<FeatureMap> {
    let (first, rest) = maps
        .split_first()
        .ok_or_else(|| Error::InvalidArgument("no segment maps to aggregate".into()))?;
    let mut out = first.clone();
    for m in rest {
        if m.shape() != first.shape() {
            return Err(Error::SizeMismatch(format!(
                "segment map shape {:?} differs from {:?}",
                m.shape(),
                first.shape()
            )));
        }
        for (o, v) in out.data.iter_mut().zip(&m.data) {
            *o *= *v;
        }
    }
    Ok(out)
}

/// Signed square root followed by scaling to unit Euclidean norm. The zero
/// vector is returned unchanged.
pub fn normalize_descriptor(b: &Descriptor) -> Descriptor {
    let rooted: Vec<f64> = b
        .values
        .iter()
        .map(|v| {
            let v = f64::from(*v);
            v.signum() * v.abs().sqrt()
        })
        .collect();
    let norm = rooted.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Descriptor::new(vec![0.0; b.len()]);
    }
    Descriptor::new(rooted.into_iter().map(|v| (v / norm) as f32).collect())
}

// ---------------------------------------------------------------------------
// descriptor files: "CBPD", version, d, reserved (u32 LE each), then d f32 LE

pub const DESCRIPTOR_MAGIC: &[u8; 4] = b"CBPD";
pub const DESCRIPTOR_VERSION: u32 = 1;

pub fn encode_descriptor(desc: &Descriptor) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * desc.len());
    out.extend_from_slice(DESCRIPTOR_MAGIC);
    out.extend_from_slice(&DESCRIPTOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(desc.len() as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for v in &desc.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_descriptor(bytes: &[u8]) -> Result<Descriptor> {
    if bytes.len() < 16 {
        return Err(Error::MalformedHeader("descriptor header needs 16 bytes".into()));
    }
    if &bytes[0..4] != DESCRIPTOR_MAGIC {
        return Err(Error::MalformedHeader("descriptor magic is not CBPD".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
    if word(4) != DESCRIPTOR_VERSION {
        return Err(Error::MalformedHeader(format!(
            "unsupported descriptor version {}",
            word(4)
        )));
    }
    let d = word(8) as usize;
    let payload = &bytes[16..];
    if payload.len() != 4 * d {
        return Err(Error::SizeMismatch(format!(
            "descriptor of dimension {d} needs {} payload bytes, got {}",
            4 * d,
            payload.len()
        )));
    }
    Ok(Descriptor::new(
        payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    ))
}

pub fn save_descriptor(desc: &Descriptor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_descriptor(desc)).map_err(|e| Error::io(path, e))
}

pub fn load_descriptor(path: impl AsRef<Path>) -> Result<Descriptor> {
    let path = path.as_ref();
    decode_descriptor(&fs::read(path).map_err(|e| Error::io(path, e))?)
}
