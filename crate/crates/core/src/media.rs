//! Image and flow containers shared by every other module, plus binary
//! PGM/PPM and Middlebury `.flo` I/O.
//!
//! Pixel coordinates follow the `(x, y)` convention: `x` is the column
//! (paired with the horizontal flow component `u`), `y` is the row (paired
//! with `v`). All grids are stored row-major.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampler::ClipIndices;

/// A video frame with intensities in `[0, 1]`.
///
/// Data is row-major with interleaved channels: the value of channel `c` at
/// `(x, y)` lives at `(y * width + x) * channels + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Frame {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidData(format!(
                "frame must have 1 or 3 channels, got {channels}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidData("frame must be non-empty".into()));
        }
        if data.len() != height * width * channels {
            return Err(Error::SizeMismatch(format!(
                "frame {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite() || **v < 0.0 || **v > 1.0) {
            return Err(Error::InvalidData(format!(
                "frame value {bad} outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: f32) -> Result<Self> {
        Self::new(height, width, channels, vec![value; height * width * channels])
    }

    /// Builds a frame by evaluating `f(x, y, c)` at every sample. Values are
    /// clamped into `[0, 1]`.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c).clamp(0.0, 1.0));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Copies a `h x w` window with top-left corner `(x0, y0)`, optionally
    /// mirrored left-right.
    pub fn crop(&self, x0: usize, y0: usize, h: usize, w: usize, flip: bool) -> Result<Frame> {
        if x0 + w > self.width || y0 + h > self.height || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "crop {h}x{w} at ({x0}, {y0}) exceeds frame {}x{}",
                self.height, self.width
            )));
        }
        let ch = self.channels;
        let mut data = Vec::with_capacity(h * w * ch);
        for y in y0..y0 + h {
            for i in 0..w {
                let x = if flip { x0 + w - 1 - i } else { x0 + i };
                let base = (y * self.width + x) * ch;
                data.extend_from_slice(&self.data[base..base + ch]);
            }
        }
        Ok(Frame {
            height: h,
            width: w,
            channels: ch,
            data,
        })
    }
}

/// Dense displacement field in pixels. `u` is horizontal, `v` vertical.
///
/// Components are stored in double precision so that derivative checks can
/// perturb them by small steps without rounding; the `.flo` format stores
/// single precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    height: usize,
    width: usize,
    u: Vec<f64>,
    v: Vec<f64>,
}

impl FlowField {
    pub fn new(height: usize, width: usize, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        let n = height * width;
        if u.len() != n || v.len() != n {
            return Err(Error::SizeMismatch(format!(
                "flow {height}x{width} needs {n} values per component, got {} and {}",
                u.len(),
                v.len()
            )));
        }
        if u.iter().chain(v.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidData("flow contains non-finite values".into()));
        }
        Ok(Self {
            height,
            width,
            u,
            v,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self::constant(height, width, 0.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, u: f64, v: f64) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            u: vec![u; n],
            v: vec![v; n],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut u = Vec::with_capacity(height * width);
        let mut v = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                let (a, b) = f(x, y);
                u.push(a);
                v.push(b);
            }
        }
        Self {
            height,
            width,
            u,
            v,
        }
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    #[inline]
    pub fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64) {
        let i = y * self.width + x;
        (self.u[i], self.v[i])
    }

    pub fn scaled(&self, factor: f64) -> FlowField {
        FlowField {
            height: self.height,
            width: self.width,
            u: self.u.iter().map(|a| a * factor).collect(),
            v: self.v.iter().map(|a| a * factor).collect(),
        }
    }

    /// Window copy; a mirrored crop also negates `u`.
    pub fn crop(&self, x0: usize, y0: usize, h: usize, w: usize, flip: bool) -> Result<FlowField> {
        if x0 + w > self.width || y0 + h > self.height || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(format!(
                "crop {h}x{w} at ({x0}, {y0}) exceeds flow {}x{}",
                self.height, self.width
            )));
        }
        let mut u = Vec::with_capacity(h * w);
        let mut v = Vec::with_capacity(h * w);
        for y in y0..y0 + h {
            for i in 0..w {
                let x = if flip { x0 + w - 1 - i } else { x0 + i };
                let k = y * self.width + x;
                u.push(if flip { -self.u[k] } else { self.u[k] });
                v.push(self.v[k]);
            }
        }
        Ok(FlowField {
            height: h,
            width: w,
            u,
            v,
        })
    }
}

/// Per-pixel boolean mask (occlusion flags, warp validity).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    bits: Vec<bool>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height * width {
            return Err(Error::SizeMismatch(format!(
                "mask {height}x{width} needs {} bits, got {}",
                height * width,
                bits.len()
            )));
        }
        Ok(Self {
            height,
            width,
            bits,
        })
    }

    pub fn filled(height: usize, width: usize, value: bool) -> Self {
        Self {
            height,
            width,
            bits: vec![value; height * width],
        }
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y));
            }
        }
        Self {
            height,
            width,
            bits,
        }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn count_ones(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub fn not(&self) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            bits: self.bits.iter().map(|b| !b).collect(),
        }
    }

    pub fn and(&self, other: &BinaryMask) -> Result<BinaryMask> {
        check_dims(self.dims(), other.dims())?;
        Ok(BinaryMask {
            height: self.height,
            width: self.width,
            bits: self
                .bits
                .iter()
                .zip(&other.bits)
                .map(|(a, b)| *a && *b)
                .collect(),
        })
    }

    /// Intersection over union of the set bits, counting only pixels at least
    /// `border` pixels away from every edge. Two empty masks have IoU 1.
    pub fn iou(&self, other: &BinaryMask, border: usize) -> Result<f64> {
        check_dims(self.dims(), other.dims())?;
        let (mut inter, mut union) = (0usize, 0usize);
        for y in border..self.height.saturating_sub(border) {
            for x in border..self.width.saturating_sub(border) {
                let (a, b) = (self.get(x, y), other.get(x, y));
                inter += usize::from(a && b);
                union += usize::from(a || b);
            }
        }
        Ok(if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        })
    }
}

/// An ordered run of frames cut from a source video.
#[derive(Debug, Clone)]
pub struct VideoClip {
    frames: Vec<Frame>,
    source_indices: ClipIndices,
    source_id: String,
}

impl VideoClip {
    pub fn new(frames: Vec<Frame>, source_indices: ClipIndices, source_id: impl Into<String>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::InvalidData("clip needs at least one frame".into()));
        };
        let dims = (first.height(), first.width(), first.channels());
        if frames
            .iter()
            .any(|f| (f.height(), f.width(), f.channels()) != dims)
        {
            return Err(Error::InvalidData("clip frames differ in shape".into()));
        }
        if source_indices.len() != frames.len() {
            return Err(Error::SizeMismatch(format!(
                "{} frames but {} source indices",
                frames.len(),
                source_indices.len()
            )));
        }
        Ok(Self {
            frames,
            source_indices,
            source_id: source_id.into(),
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn source_indices(&self) -> &ClipIndices {
        &self.source_indices
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.frames[0].dims()
    }
}

pub(crate) fn check_dims(left: (usize, usize), right: (usize, usize)) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { left, right })
    }
}

// ---------------------------------------------------------------------------
// PGM / PPM

/// Reads a binary PGM (`P5`) or PPM (`P6`) file with maxval 255.
pub fn load_frame(path: impl AsRef<Path>) -> Result<Frame> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_pnm(&bytes)
}

pub fn decode_pnm(bytes: &[u8]) -> Result<Frame> {
    let mut pos = 0usize;
    let magic = next_token(bytes, &mut pos)?;
    let channels = match magic.as_str() {
        "P5" => 1,
        "P6" => 3,
        other => {
            return Err(Error::MalformedHeader(format!(
                "unsupported magic {other:?}"
            )))
        }
    };
    let width = parse_dim(&next_token(bytes, &mut pos)?, "width")?;
    let height = parse_dim(&next_token(bytes, &mut pos)?, "height")?;
    let maxval = parse_dim(&next_token(bytes, &mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::MalformedHeader(format!(
            "maxval must be 255, got {maxval}"
        )));
    }
    // exactly one whitespace byte separates the header from the payload
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        _ => return Err(Error::MalformedHeader("missing separator after maxval".into())),
    }
    let expected = width
        .checked_mul(height)
        .and_then(|n| n.checked_mul(channels))
        .ok_or_else(|| Error::MalformedHeader("dimensions overflow".into()))?;
    let payload = &bytes[pos..];
    if payload.len() < expected {
        return Err(Error::TruncatedPayload {
            expected,
            found: payload.len(),
        });
    }
    let data = payload[..expected]
        .iter()
        .map(|&b| f32::from(b) / 255.0)
        .collect();
    Frame::new(height, width, channels, data)
}

fn next_token(bytes: &[u8], pos: &mut usize) -> Result<String> {
    loop {
        match bytes.get(*pos) {
            None => return Err(Error::MalformedHeader("unexpected end of header".into())),
            Some(b'#') => {
                while let Some(&b) = bytes.get(*pos) {
                    *pos += 1;
                    if b == b'\n' {
                        break;
                    }
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
        }
    }
    let start = *pos;
    while let Some(b) = bytes.get(*pos) {
        if b.is_ascii_whitespace() || *b == b'#' {
            break;
        }
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .map(str::to_owned)
        .map_err(|_| Error::MalformedHeader("non-ascii header token".into()))
}

fn parse_dim(token: &str, what: &str) -> Result<usize> {
    match token.parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(Error::MalformedHeader(format!("bad {what}: {token:?}"))),
    }
}

/// Quantizes `v` in `[0, 1]` to a byte, rounding half up.
#[inline]
pub fn quantize(v: f32) -> u8 {
    (f64::from(v) * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

pub fn encode_pnm(frame: &Frame) -> Vec<u8> {
    let magic = if frame.channels() == 1 { "P5" } else { "P6" };
    let mut out = format!("{magic}\n{} {}\n255\n", frame.width(), frame.height()).into_bytes();
    out.extend(frame.data().iter().map(|&v| quantize(v)));
    out
}

pub fn save_frame(frame: &Frame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pnm(frame)).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// Middlebury .flo

pub const FLO_MAGIC: f32 = 202021.25;

pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 12 {
        return Err(Error::SizeMismatch(format!(
            "flow header needs 12 bytes, got {}",
            bytes.len()
        )));
    }
    let magic = f32::from_le_bytes(bytes[0..4].try_into().unwrap());
    if magic != FLO_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let width = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let height = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if width <= 0 || height <= 0 {
        return Err(Error::SizeMismatch(format!(
            "non-positive flow dimensions {width}x{height}"
        )));
    }
    let (width, height) = (width as usize, height as usize);
    let n = width * height;
    let payload = &bytes[12..];
    if payload.len() != n * 8 {
        return Err(Error::SizeMismatch(format!(
            "flow {width}x{height} needs {} payload bytes, got {}",
            n * 8,
            payload.len()
        )));
    }
    let mut u = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    for pair in payload.chunks_exact(8) {
        u.push(f64::from(f32::from_le_bytes(pair[0..4].try_into().unwrap())));
        v.push(f64::from(f32::from_le_bytes(pair[4..8].try_into().unwrap())));
    }
    FlowField::new(height, width, u, v)
}

pub fn encode_flo(flow: &FlowField) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + flow.u.len() * 8);
    out.extend_from_slice(&FLO_MAGIC.to_le_bytes());
    out.extend_from_slice(&(flow.width as i32).to_le_bytes());
    out.extend_from_slice(&(flow.height as i32).to_le_bytes());
    for (u, v) in flow.u.iter().zip(&flow.v) {
        out.extend_from_slice(&(*u as f32).to_le_bytes());
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn load_flow(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_flo(&bytes)
}

pub fn save_flow(flow: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    file.write_all(&encode_flo(flow))
        .map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    #[test]
    fn pgm_all_white() {
        let dir = tmp();
        let p = dir.path().join("a.pgm");
        let mut bytes = b"P5\n2 2\n255\n".to_vec();
        bytes.extend([255u8; 4]);
        fs::write(&p, bytes).unwrap();
        let f = load_frame(&p).unwrap();
        assert_eq!(f.dims(), (2, 2));
        assert_eq!(f.data(), &[1.0; 4]);
    }

    #[test]
    fn ppm_linear_mapping() {
        let mut bytes = b"P6 1 1 255\n".to_vec();
        bytes.extend([0u8, 128, 255]);
        let f = decode_pnm(&bytes).unwrap();
        assert_eq!(f.channels(), 3);
        assert_eq!(f.data(), &[0.0, 128.0 / 255.0, 1.0]);
    }

    #[test]
    fn header_comments_are_skipped() {
        let mut bytes = b"P5\n# made by hand\n1 1\n255\n".to_vec();
        bytes.push(51);
        assert_eq!(decode_pnm(&bytes).unwrap().data(), &[0.2]);
    }

    #[test]
    fn distinct_load_errors() {
        let dir = tmp();
        assert!(matches!(
            load_frame(dir.path().join("missing.pgm")),
            Err(Error::NotFound(_))
        ));

        let mut short = b"P5\n4 4\n255\n".to_vec();
        short.extend([1u8, 2, 3]);
        assert!(matches!(
            decode_pnm(&short),
            Err(Error::TruncatedPayload {
                expected: 16,
                found: 3
            })
        ));

        for bad in [&b"P4\n1 1\n255\n\0"[..], b"P5\n1\n", b"P5 1 1 65535\n\0\0", b"P5 x 1 255\n\0"] {
            assert!(
                matches!(decode_pnm(bad), Err(Error::MalformedHeader(_))),
                "{:?}",
                String::from_utf8_lossy(bad)
            );
        }
    }

    #[test]
    fn save_zero_frame_and_half() {
        let dir = tmp();
        let p = dir.path().join("z.pgm");
        save_frame(&Frame::filled(3, 3, 1, 0.0).unwrap(), &p).unwrap();
        let bytes = fs::read(&p).unwrap();
        assert!(bytes.ends_with(&[0u8; 9]));
        assert_eq!(bytes.len(), b"P5\n3 3\n255\n".len() + 9);

        assert_eq!(quantize(0.5), 128);
        assert_eq!(quantize(0.0), 0);
        assert_eq!(quantize(1.0), 255);
    }

    #[test]
    fn quantization_error_bound_is_exhaustive() {
        // every code's decision interval ends within 1/510 of the code value
        let mut worst = 0.0f64;
        for code in 0..=255u32 {
            let centre = f64::from(code) / 255.0;
            for k in -1000..=1000 {
                let v = (centre + f64::from(k) / 1000.0 / 510.0).clamp(0.0, 1.0) as f32;
                let back = f64::from(quantize(v)) / 255.0;
                worst = worst.max((back - f64::from(v)).abs());
            }
        }
        assert!(worst <= 1.0 / 510.0 + 1e-7, "worst {worst}");
    }

    #[test]
    fn flo_decode_single_pixel() {
        let mut bytes = b"PIEH".to_vec();
        assert_eq!(f32::from_le_bytes(bytes[..4].try_into().unwrap()), FLO_MAGIC);
        bytes.extend(1i32.to_le_bytes());
        bytes.extend(1i32.to_le_bytes());
        bytes.extend(2.5f32.to_le_bytes());
        bytes.extend((-1.0f32).to_le_bytes());
        let f = decode_flo(&bytes).unwrap();
        assert_eq!(f.u(), &[2.5]);
        assert_eq!(f.v(), &[-1.0]);
    }

    #[test]
    fn flo_errors() {
        let mut bytes = 0.0f32.to_le_bytes().to_vec();
        bytes.extend(1i32.to_le_bytes());
        bytes.extend(1i32.to_le_bytes());
        bytes.extend([0u8; 8]);
        assert!(matches!(decode_flo(&bytes), Err(Error::BadMagic(m)) if m == 0.0));

        let mut bytes = FLO_MAGIC.to_le_bytes().to_vec();
        bytes.extend(2i32.to_le_bytes());
        bytes.extend(2i32.to_le_bytes());
        bytes.extend([0u8; 8]);
        assert!(matches!(decode_flo(&bytes), Err(Error::SizeMismatch(_))));
    }

    #[test]
    fn flo_file_round_trip_is_byte_identical() {
        let dir = tmp();
        let p = dir.path().join("a.flo");
        let q = dir.path().join("b.flo");
        let flow = FlowField::from_fn(8, 8, |x, y| {
            (x as f64 * 0.37 - 1.2, (y as f64).sin() * 3.1)
        });
        save_flow(&flow, &p).unwrap();
        save_flow(&load_flow(&p).unwrap(), &q).unwrap();
        assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap());
    }

    #[test]
    fn crop_and_flip() {
        let f = Frame::from_fn(2, 3, 1, |x, y, _| (x + 3 * y) as f32 / 10.0).unwrap();
        let c = f.crop(1, 0, 2, 2, true).unwrap();
        assert_eq!(c.data(), &[0.2, 0.1, 0.5, 0.4]);
        let flow = FlowField::from_fn(2, 3, |x, _| (x as f64, 1.0));
        let c = flow.crop(0, 0, 1, 3, true).unwrap();
        assert_eq!(c.u(), &[-2.0, -1.0, -0.0]);
        assert!(f.crop(2, 0, 2, 2, false).is_err());
    }

    proptest! {
        #[test]
        fn frame_round_trip_within_half_code(
            (h, w, ch, data) in (1usize..6, 1usize..6, prop_oneof![Just(1usize), Just(3usize)])
                .prop_flat_map(|(h, w, c)| (Just(h), Just(w), Just(c), proptest::collection::vec(0.0f32..=1.0, h * w * c)))
        ) {
            let f = Frame::new(h, w, ch, data).unwrap();
            let back = decode_pnm(&encode_pnm(&f)).unwrap();
            prop_assert_eq!(back.dims(), f.dims());
            for (a, b) in f.data().iter().zip(back.data()) {
                prop_assert!((a - b).abs() <= 1.0 / 510.0 + 1e-6);
            }
        }

        #[test]
        fn flo_bytes_round_trip(
            (h, w, vals) in (1usize..5, 1usize..5)
                .prop_flat_map(|(h, w)| (Just(h), Just(w), proptest::collection::vec(-1e4f32..1e4, 2 * h * w)))
        ) {
            let mut bytes = FLO_MAGIC.to_le_bytes().to_vec();
            bytes.extend((w as i32).to_le_bytes());
            bytes.extend((h as i32).to_le_bytes());
            for v in &vals {
                bytes.extend(v.to_le_bytes());
            }
            let flow = decode_flo(&bytes).unwrap();
            prop_assert_eq!(encode_flo(&flow), bytes);
        }
    }
}
