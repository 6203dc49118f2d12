//! Photometric reconstruction loss with forward-backward occlusion masking
//! and its analytic gradient with respect to both flows.

use crate::error::{Error, Result};
use crate::media::{check_dims, BinaryMask, FlowField, Frame};

use super::warp::{frame_corners, stencil_at, warp_flow};

/// Generalized Charbonnier penalty `(x^2 + eps^2)^alpha`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CharbonnierParams {
    pub alpha: f64,
    pub epsilon: f64,
}

impl Default for CharbonnierParams {
    fn default() -> Self {
        Self {
            alpha: 0.45,
            epsilon: 1e-3,
        }
    }
}

impl CharbonnierParams {
    pub fn new(alpha: f64, epsilon: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 1.0) || !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "charbonnier needs 0 < alpha <= 1 and epsilon > 0, got alpha={alpha} epsilon={epsilon}"
            )));
        }
        Ok(Self { alpha, epsilon })
    }

    #[inline]
    fn derivative(&self, x: f64) -> f64 {
        2.0 * self.alpha * x * (x * x + self.epsilon * self.epsilon).powf(self.alpha - 1.0)
    }
}

#[inline]
pub fn charbonnier(x: f64, params: &CharbonnierParams) -> f64 {
    (x * x + params.epsilon * params.epsilon).powf(params.alpha)
}

/// Forward-backward consistency tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OcclusionParams {
    /// Relative tolerance, scaled by the squared flow magnitudes.
    pub alpha1: f64,
    /// Absolute tolerance in squared pixels.
    pub alpha2: f64,
}

impl Default for OcclusionParams {
    fn default() -> Self {
        Self {
            alpha1: 0.01,
            alpha2: 0.5,
        }
    }
}

impl OcclusionParams {
    pub fn new(alpha1: f64, alpha2: f64) -> Result<Self> {
        if !(alpha1 >= 0.0) || !(alpha2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "occlusion tolerances must be non-negative, got {alpha1}, {alpha2}"
            )));
        }
        Ok(Self { alpha1, alpha2 })
    }
}

/// Breakdown of the occlusion-aware loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossReport {
    pub value: f64,
    pub forward_term: f64,
    pub backward_term: f64,
    pub nonoccluded_fraction_fwd: f64,
    pub nonoccluded_fraction_bwd: f64,
}

/// Mean penalty of `i1 - i1_prime` over included pixels and all channels.
/// Returns 0 when nothing is included.
pub fn reconstruction_loss(
    i1: &Frame,
    i1_prime: &Frame,
    include: &BinaryMask,
    params: &CharbonnierParams,
) -> Result<f64> {
    check_dims(i1.dims(), i1_prime.dims())?;
    check_dims(i1.dims(), include.dims())?;
    if i1.channels() != i1_prime.channels() {
        return Err(Error::InvalidData("channel counts differ".into()));
    }
    let ch = i1.channels();
    let mut total = 0.0;
    let mut count = 0usize;
    for (p, &inc) in include.bits().iter().enumerate() {
        if !inc {
            continue;
        }
        count += 1;
        for c in 0..ch {
            let r = f64::from(i1.data()[p * ch + c]) - f64::from(i1_prime.data()[p * ch + c]);
            total += charbonnier(r, params);
        }
    }
    Ok(if count == 0 {
        0.0
    } else {
        total / (count * ch) as f64
    })
}

/// Occlusion flags for both directions. A pixel is flagged (true) when
/// `|mf + mb(x+mf)|^2 >= alpha1 (|mf|^2 + |mb(x+mf)|^2) + alpha2`; the
/// backward flags swap the roles of the two flows.
pub fn occlusion_flags(
    forward: &FlowField,
    backward: &FlowField,
    params: &OcclusionParams,
) -> Result<(BinaryMask, BinaryMask)> {
    check_dims(forward.dims(), backward.dims())?;
    Ok((
        consistency_violations(forward, backward, params)?,
        consistency_violations(backward, forward, params)?,
    ))
}

fn consistency_violations(
    flow: &FlowField,
    reverse: &FlowField,
    params: &OcclusionParams,
) -> Result<BinaryMask> {
    let warped = warp_flow(reverse, flow)?;
    let bits = flow
        .u()
        .iter()
        .zip(flow.v())
        .zip(warped.u().iter().zip(warped.v()))
        .map(|((&fu, &fv), (&bu, &bv))| {
            let (su, sv) = (fu + bu, fv + bv);
            let mismatch = su * su + sv * sv;
            let scale = fu * fu + fv * fv + bu * bu + bv * bv;
            mismatch >= params.alpha1 * scale + params.alpha2
        })
        .collect();
    BinaryMask::new(flow.height(), flow.width(), bits)
}

/// Pixels that contribute to each direction's reconstruction term: not
/// occluded and with an in-bounds sample point.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMasks {
    pub occluded_fwd: BinaryMask,
    pub occluded_bwd: BinaryMask,
    pub include_fwd: BinaryMask,
    pub include_bwd: BinaryMask,
}

pub fn occlusion_masks(
    forward: &FlowField,
    backward: &FlowField,
    params: &OcclusionParams,
) -> Result<OcclusionMasks> {
    let (of, ob) = occlusion_flags(forward, backward, params)?;
    let include_fwd = of.not().and(&validity(forward))?;
    let include_bwd = ob.not().and(&validity(backward))?;
    Ok(OcclusionMasks {
        occluded_fwd: of,
        occluded_bwd: ob,
        include_fwd,
        include_bwd,
    })
}

fn validity(flow: &FlowField) -> BinaryMask {
    BinaryMask::from_fn(flow.height(), flow.width(), |x, y| stencil_at(flow, x, y).valid)
}

fn check_inputs(i1: &Frame, i2: &Frame, mf: &FlowField, mb: &FlowField) -> Result<()> {
    check_dims(i1.dims(), i2.dims())?;
    check_dims(i1.dims(), mf.dims())?;
    check_dims(i1.dims(), mb.dims())?;
    if i1.channels() != i2.channels() {
        return Err(Error::InvalidData("channel counts differ".into()));
    }
    Ok(())
}

/// Sum of the forward and backward masked reconstruction terms.
pub fn occlusion_aware_loss(
    i1: &Frame,
    i2: &Frame,
    mf: &FlowField,
    mb: &FlowField,
    cparams: &CharbonnierParams,
    oparams: &OcclusionParams,
) -> Result<LossReport> {
    check_inputs(i1, i2, mf, mb)?;
    let masks = occlusion_masks(mf, mb, oparams)?;
    masked_loss(i1, i2, mf, mb, &masks, cparams)
}

/// The occlusion-aware loss with the masks held fixed.
pub fn masked_loss(
    i1: &Frame,
    i2: &Frame,
    mf: &FlowField,
    mb: &FlowField,
    masks: &OcclusionMasks,
    cparams: &CharbonnierParams,
) -> Result<LossReport> {
    check_inputs(i1, i2, mf, mb)?;
    let n = (i1.height() * i1.width()) as f64;
    let forward_term = directional_term(i1, i2, mf, &masks.include_fwd, cparams, None);
    let backward_term = directional_term(i2, i1, mb, &masks.include_bwd, cparams, None);
    Ok(LossReport {
        value: forward_term + backward_term,
        forward_term,
        backward_term,
        nonoccluded_fraction_fwd: 1.0 - masks.occluded_fwd.count_ones() as f64 / n,
        nonoccluded_fraction_bwd: 1.0 - masks.occluded_bwd.count_ones() as f64 / n,
    })
}

/// Analytic gradient of [`occlusion_aware_loss`] with respect to every
/// component of both flows. The occlusion and validity masks are constants.
pub fn loss_gradient_wrt_flow(
    i1: &Frame,
    i2: &Frame,
    mf: &FlowField,
    mb: &FlowField,
    cparams: &CharbonnierParams,
    oparams: &OcclusionParams,
) -> Result<(FlowField, FlowField)> {
    check_inputs(i1, i2, mf, mb)?;
    let masks = occlusion_masks(mf, mb, oparams)?;
    masked_loss_gradient(i1, i2, mf, mb, &masks, cparams)
}

pub fn masked_loss_gradient(
    i1: &Frame,
    i2: &Frame,
    mf: &FlowField,
    mb: &FlowField,
    masks: &OcclusionMasks,
    cparams: &CharbonnierParams,
) -> Result<(FlowField, FlowField)> {
    check_inputs(i1, i2, mf, mb)?;
    let (h, w) = i1.dims();
    let mut dmf = FlowField::zeros(h, w);
    let mut dmb = FlowField::zeros(h, w);
    directional_term(i1, i2, mf, &masks.include_fwd, cparams, Some(&mut dmf));
    directional_term(i2, i1, mb, &masks.include_bwd, cparams, Some(&mut dmb));
    Ok((dmf, dmb))
}

/// Mean penalty of `reference - warp(target, flow)` over included pixels.
/// When `grad` is given, the derivative of that mean with respect to the
/// flow is written into it.
fn directional_term(
    reference: &Frame,
    target: &Frame,
    flow: &FlowField,
    include: &BinaryMask,
    params: &CharbonnierParams,
    mut grad: Option<&mut FlowField>,
) -> f64 {
    let count = include.count_ones();
    if count == 0 {
        return 0.0;
    }
    let ch = reference.channels();
    let norm = 1.0 / (count * ch) as f64;
    let w = reference.width();
    let mut total = 0.0;
    for y in 0..reference.height() {
        for x in 0..w {
            if !include.get(x, y) {
                continue;
            }
            let s = stencil_at(flow, x, y);
            let (mut gx, mut gy) = (0.0, 0.0);
            for c in 0..ch {
                let (a00, a10, a01, a11) = frame_corners(target, &s, c);
                let r = f64::from(reference.get(x, y, c)) - s.interpolate(a00, a10, a01, a11);
                total += charbonnier(r, params);
                if grad.is_some() {
                    // d(rho(r))/d(point) = -rho'(r) * d(warp)/d(point)
                    let d = params.derivative(r);
                    let (sx, sy) = s.gradient(a00, a10, a01, a11);
                    gx -= d * sx;
                    gy -= d * sy;
                }
            }
            if let Some(g) = grad.as_deref_mut() {
                g.u_mut()[y * w + x] = gx * norm;
                g.v_mut()[y * w + x] = gy * norm;
            }
        }
    }
    total * norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn smooth(h: usize, w: usize, phase: f32) -> Frame {
        Frame::from_fn(h, w, 1, |x, y, _| {
            0.5 + 0.3 * ((x as f32 * 0.4 + phase).sin() * (y as f32 * 0.3 - phase).cos())
        })
        .unwrap()
    }

    #[test]
    fn charbonnier_values() {
        let p = CharbonnierParams::default();
        let zero = charbonnier(0.0, &p);
        assert!((zero - 10f64.powf(-2.7)).abs() < 1e-15);
        assert!((zero - 1.995e-3).abs() < 1e-6);
        // oracle: (1 + 1e-6)^0.45 = exp(0.45 * ln(1 + 1e-6))
        let one = charbonnier(1.0, &p);
        assert!((one - (0.45 * 1e-6f64.ln_1p()).exp()).abs() < 1e-15);
        assert!((one - 1.000_000_45).abs() < 1e-12);
        for x in [0.001, 0.3, 2.0, 17.5] {
            assert_eq!(charbonnier(x, &p), charbonnier(-x, &p));
        }
    }

    #[test]
    fn charbonnier_param_validation() {
        assert!(CharbonnierParams::new(0.0, 1e-3).is_err());
        assert!(CharbonnierParams::new(1.5, 1e-3).is_err());
        assert!(CharbonnierParams::new(0.45, 0.0).is_err());
        assert!(CharbonnierParams::new(1.0, 1e-3).is_ok());
        assert!(OcclusionParams::new(-0.1, 0.5).is_err());
    }

    #[test]
    fn reconstruction_loss_examples() {
        let p = CharbonnierParams::default();
        let f = smooth(4, 4, 0.3);
        let all = BinaryMask::filled(4, 4, true);
        let l = reconstruction_loss(&f, &f, &all, &p).unwrap();
        assert!((l - charbonnier(0.0, &p)).abs() < 1e-15);

        let a = Frame::new(1, 1, 1, vec![0.0]).unwrap();
        let b = Frame::new(1, 1, 1, vec![1.0]).unwrap();
        let one = BinaryMask::filled(1, 1, true);
        assert_eq!(
            reconstruction_loss(&a, &b, &one, &p).unwrap(),
            charbonnier(1.0, &p)
        );

        let g = smooth(4, 4, 1.1);
        let half = BinaryMask::from_fn(4, 4, |x, _| x < 2);
        let mut expected = 0.0;
        for y in 0..4 {
            for x in 0..2 {
                expected += charbonnier(f64::from(f.get(x, y, 0)) - f64::from(g.get(x, y, 0)), &p);
            }
        }
        expected /= 8.0;
        let got = reconstruction_loss(&f, &g, &half, &p).unwrap();
        assert!((got - expected).abs() < 1e-15);

        let none = BinaryMask::filled(4, 4, false);
        assert_eq!(reconstruction_loss(&f, &g, &none, &p).unwrap(), 0.0);
        assert!(reconstruction_loss(&f, &smooth(4, 5, 0.0), &all, &p).is_err());
    }

    #[test]
    fn occlusion_flag_examples() {
        let op = OcclusionParams::default();
        let z = FlowField::zeros(6, 20);
        let (of, ob) = occlusion_flags(&z, &z, &op).unwrap();
        assert_eq!(of.count_ones() + ob.count_ones(), 0);

        let mf = FlowField::constant(6, 20, 10.0, 0.0);
        let mb = FlowField::constant(6, 20, -10.0, 0.0);
        let (of, ob) = occlusion_flags(&mf, &mb, &op).unwrap();
        for y in 0..6 {
            for x in 0..10 {
                assert!(!of.get(x, y));
            }
            for x in 10..20 {
                assert!(!ob.get(x, y));
            }
        }

        // 100 >= 0.01 * (100 + 0) + 0.5
        let (of, _) = occlusion_flags(&mf, &z, &op).unwrap();
        assert_eq!(of.count_ones(), 120);
    }

    #[test]
    fn identical_frames_zero_flow() {
        let f = smooth(8, 8, 0.2);
        let z = FlowField::zeros(8, 8);
        let p = CharbonnierParams::default();
        let r = occlusion_aware_loss(&f, &f, &z, &z, &p, &OcclusionParams::default()).unwrap();
        assert!((r.value - 2.0 * charbonnier(0.0, &p)).abs() < 1e-15);
        assert_eq!(r.nonoccluded_fraction_fwd, 1.0);
        assert_eq!(r.value, r.forward_term + r.backward_term);

        let (dmf, dmb) = loss_gradient_wrt_flow(&f, &f, &z, &z, &p, &OcclusionParams::default()).unwrap();
        let max = dmf.u().iter().chain(dmf.v()).chain(dmb.u()).chain(dmb.v()).fold(0.0f64, |m, g| m.max(g.abs()));
        assert_eq!(max, 0.0);
    }

    #[test]
    fn fully_occluded_loss_is_zero() {
        let f = smooth(5, 5, 0.2);
        let g = smooth(5, 5, 0.9);
        let mf = FlowField::constant(5, 5, 3.0, 0.0);
        let z = FlowField::zeros(5, 5);
        // forward and backward both displace by 3, so the mismatch is 36
        let op = OcclusionParams::new(0.0, 0.1).unwrap();
        let r = occlusion_aware_loss(&f, &g, &mf, &mf, &CharbonnierParams::default(), &op).unwrap();
        assert_eq!(r.value, 0.0);
        assert_eq!(r.nonoccluded_fraction_bwd, 0.0);
        let r = occlusion_aware_loss(&f, &g, &z, &z, &CharbonnierParams::default(), &op).unwrap();
        assert!(r.value > 0.0);
    }

    #[test]
    fn occluded_pixel_has_zero_forward_gradient() {
        let f = smooth(6, 6, 0.0);
        let g = smooth(6, 6, 0.7);
        let mut mf = FlowField::constant(6, 6, 0.3, -0.2);
        let mb = FlowField::constant(6, 6, -0.3, 0.2);
        mf.u_mut()[14] = 4.0;
        let masks = occlusion_masks(&mf, &mb, &OcclusionParams::default()).unwrap();
        assert!(masks.occluded_fwd.bits()[14]);
        let (dmf, _) = masked_loss_gradient(&f, &g, &mf, &mb, &masks, &CharbonnierParams::default()).unwrap();
        assert_eq!(dmf.get(2, 2), (0.0, 0.0));
        assert!(dmf.get(1, 1).0 != 0.0);
    }
}
