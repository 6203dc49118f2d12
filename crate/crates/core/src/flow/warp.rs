//! Bilinear inverse warping of frames and flow fields.

use crate::error::Result;
use crate::media::{check_dims, BinaryMask, FlowField, Frame};

/// Bilinear sampling stencil for one (possibly clamped) sample point.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stencil {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
    pub fx: f64,
    pub fy: f64,
    /// The unclamped point lies inside `[0, W-1] x [0, H-1]`.
    pub valid: bool,
}

impl Stencil {
    /// The lower corner is capped at `W-2` so that the right and bottom edges
    /// are reached with a weight of one instead of a zero-width cell.
    #[inline]
    pub fn new(px: f64, py: f64, width: usize, height: usize) -> Self {
        let (wmax, hmax) = ((width - 1) as f64, (height - 1) as f64);
        let valid = (0.0..=wmax).contains(&px) && (0.0..=hmax).contains(&py);
        let cx = if px.is_nan() { 0.0 } else { px.clamp(0.0, wmax) };
        let cy = if py.is_nan() { 0.0 } else { py.clamp(0.0, hmax) };
        let x0 = (cx.floor() as usize).min(width.saturating_sub(2));
        let y0 = (cy.floor() as usize).min(height.saturating_sub(2));
        Self {
            x0,
            y0,
            x1: (x0 + 1).min(width - 1),
            y1: (y0 + 1).min(height - 1),
            fx: cx - x0 as f64,
            fy: cy - y0 as f64,
            valid,
        }
    }

    #[inline]
    pub fn interpolate(&self, a00: f64, a10: f64, a01: f64, a11: f64) -> f64 {
        let top = a00 + self.fx * (a10 - a00);
        let bottom = a01 + self.fx * (a11 - a01);
        top + self.fy * (bottom - top)
    }

    /// Partial derivatives of [`Stencil::interpolate`] with respect to the
    /// sample point.
    #[inline]
    pub fn gradient(&self, a00: f64, a10: f64, a01: f64, a11: f64) -> (f64, f64) {
        let (fx, fy) = (self.fx, self.fy);
        (
            (1.0 - fy) * (a10 - a00) + fy * (a11 - a01),
            (1.0 - fx) * (a01 - a00) + fx * (a11 - a10),
        )
    }
}

#[inline]
pub(crate) fn frame_corners(frame: &Frame, s: &Stencil, c: usize) -> (f64, f64, f64, f64) {
    (
        f64::from(frame.get(s.x0, s.y0, c)),
        f64::from(frame.get(s.x1, s.y0, c)),
        f64::from(frame.get(s.x0, s.y1, c)),
        f64::from(frame.get(s.x1, s.y1, c)),
    )
}

#[inline]
pub(crate) fn stencil_at(flow: &FlowField, x: usize, y: usize) -> Stencil {
    let (u, v) = flow.get(x, y);
    Stencil::new(x as f64 + u, y as f64 + v, flow.width(), flow.height())
}

/// Reconstructs the reference frame by sampling `target` at `(x+u, y+v)`.
///
/// Sample points are clamped to the image rectangle; the returned mask marks
/// pixels whose unclamped point was inside it.
pub fn inverse_warp(target: &Frame, flow: &FlowField) -> Result<(Frame, BinaryMask)> {
    check_dims(target.dims(), flow.dims())?;
    let (h, w, ch) = (target.height(), target.width(), target.channels());
    let mut data = Vec::with_capacity(h * w * ch);
    let mut valid = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let s = stencil_at(flow, x, y);
            valid.push(s.valid);
            for c in 0..ch {
                let (a, b, cc, d) = frame_corners(target, &s, c);
                data.push(s.interpolate(a, b, cc, d).clamp(0.0, 1.0) as f32);
            }
        }
    }
    Ok((Frame::new(h, w, ch, data)?, BinaryMask::new(h, w, valid)?))
}

/// Samples `backward` at the points displaced by `forward`, component-wise,
/// with clamped coordinates.
pub fn warp_flow(backward: &FlowField, forward: &FlowField) -> Result<FlowField> {
    check_dims(backward.dims(), forward.dims())?;
    let (h, w) = backward.dims();
    let (bu, bv) = (backward.u(), backward.v());
    Ok(FlowField::from_fn(h, w, |x, y| {
        let s = stencil_at(forward, x, y);
        let at = |g: &[f64]| {
            s.interpolate(
                g[s.y0 * w + s.x0],
                g[s.y0 * w + s.x1],
                g[s.y1 * w + s.x0],
                g[s.y1 * w + s.x1],
            )
        };
        (at(bu), at(bv))
    }))
}
