//! Central finite differences over flow fields, used to verify the analytic
//! loss gradient.

use crate::error::{Error, Result};
use crate::media::{check_dims, BinaryMask, FlowField, Frame};

use super::loss::{masked_loss, masked_loss_gradient, occlusion_masks, CharbonnierParams, OcclusionParams};

/// Central-difference gradient of `loss` with respect to every component of
/// both flows: `(f(x+h) - f(x-h)) / 2h`.
pub fn finite_difference_gradient<F>(
    loss: F,
    forward: &FlowField,
    backward: &FlowField,
    step: f64,
) -> Result<(FlowField, FlowField)>
where
    F: Fn(&FlowField, &FlowField) -> f64,
{
    if !(step > 0.0) {
        return Err(Error::InvalidArgument(format!("step must be positive, got {step}")));
    }
    check_dims(forward.dims(), backward.dims())?;
    let (h, w) = forward.dims();
    let n = h * w;
    let mut df = FlowField::zeros(h, w);
    let mut db = FlowField::zeros(h, w);
    let mut mf = forward.clone();
    let mut mb = backward.clone();

    for comp in 0..4 {
        let original: Vec<f64> = component(&mut mf, &mut mb, comp).to_vec();
        let mut grad = vec![0.0; n];
        for (i, &orig) in original.iter().enumerate() {
            component(&mut mf, &mut mb, comp)[i] = orig + step;
            let plus = loss(&mf, &mb);
            component(&mut mf, &mut mb, comp)[i] = orig - step;
            let minus = loss(&mf, &mb);
            component(&mut mf, &mut mb, comp)[i] = orig;
            grad[i] = (plus - minus) / (2.0 * step);
        }
        component(&mut df, &mut db, comp).copy_from_slice(&grad);
    }
    Ok((df, db))
}

fn component<'a>(mf: &'a mut FlowField, mb: &'a mut FlowField, comp: usize) -> &'a mut [f64] {
    match comp {
        0 => mf.u_mut(),
        1 => mf.v_mut(),
        2 => mb.u_mut(),
        _ => mb.v_mut(),
    }
}

/// `|a - n| / max(|a|, |n|)`, zero when both vanish.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale == 0.0 {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Comparison of analytic and numeric gradients over selected components.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct GradientCheck {
    pub compared: usize,
    pub within_tolerance: usize,
    pub max_relative_error: f64,
    pub median_relative_error: f64,
}

impl GradientCheck {
    pub fn pass_fraction(&self) -> f64 {
        if self.compared == 0 {
            1.0
        } else {
            self.within_tolerance as f64 / self.compared as f64
        }
    }

    pub fn merge(&self, other: &GradientCheck) -> GradientCheck {
        let compared = self.compared + other.compared;
        GradientCheck {
            compared,
            within_tolerance: self.within_tolerance + other.within_tolerance,
            max_relative_error: self.max_relative_error.max(other.max_relative_error),
            median_relative_error: self.median_relative_error.max(other.median_relative_error),
        }
    }
}

/// Components whose derivative is well defined for a central difference of
/// width `margin`: the sample point of an included pixel lies at least
/// `margin` inside the image rectangle, and the coordinate being perturbed is
/// at least `margin` from a bilinear cell edge.
pub fn nondegenerate_components(
    flow: &FlowField,
    include: &BinaryMask,
    margin: f64,
) -> Result<(BinaryMask, BinaryMask)> {
    check_dims(flow.dims(), include.dims())?;
    let (h, w) = flow.dims();
    let (wmax, hmax) = ((w - 1) as f64, (h - 1) as f64);
    let off_edge = |c: f64| (c - c.round()).abs() >= margin;
    let inside = |px: f64, py: f64| {
        px >= margin && px <= wmax - margin && py >= margin && py <= hmax - margin
    };
    let ok_u = BinaryMask::from_fn(h, w, |x, y| {
        let (u, v) = flow.get(x, y);
        let (px, py) = (x as f64 + u, y as f64 + v);
        include.get(x, y) && inside(px, py) && off_edge(px)
    });
    let ok_v = BinaryMask::from_fn(h, w, |x, y| {
        let (u, v) = flow.get(x, y);
        let (px, py) = (x as f64 + u, y as f64 + v);
        include.get(x, y) && inside(px, py) && off_edge(py)
    });
    Ok((ok_u, ok_v))
}

/// Compares `analytic` with `numeric` on the components selected by the
/// masks.
pub fn compare_gradients(
    analytic: &FlowField,
    numeric: &FlowField,
    select_u: &BinaryMask,
    select_v: &BinaryMask,
    tolerance: f64,
) -> Result<GradientCheck> {
    check_dims(analytic.dims(), numeric.dims())?;
    let mut errors = Vec::new();
    for (sel, a, n) in [
        (select_u, analytic.u(), numeric.u()),
        (select_v, analytic.v(), numeric.v()),
    ] {
        check_dims(sel.dims(), analytic.dims())?;
        for (i, &on) in sel.bits().iter().enumerate() {
            if on {
                errors.push(relative_error(a[i], n[i]));
            }
        }
    }
    if errors.is_empty() {
        return Ok(GradientCheck::default());
    }
    let within = errors.iter().filter(|e| **e < tolerance).count();
    let max = errors.iter().cloned().fold(0.0, f64::max);
    errors.sort_by(f64::total_cmp);
    Ok(GradientCheck {
        compared: errors.len(),
        within_tolerance: within,
        max_relative_error: max,
        median_relative_error: errors[errors.len() / 2],
    })
}

/// Compares the analytic gradient of the occlusion-aware loss with central
/// differences of width `step`. Occlusion masks are computed once at the
/// given flows and held fixed, matching how the analytic gradient treats
/// them. Only non-degenerate components (margin `2 * step`) are compared.
#[allow(clippy::too_many_arguments)]
pub fn check_loss_gradient(
    i1: &Frame,
    i2: &Frame,
    forward: &FlowField,
    backward: &FlowField,
    cparams: &CharbonnierParams,
    oparams: &OcclusionParams,
    step: f64,
    tolerance: f64,
) -> Result<GradientCheck> {
    let masks = occlusion_masks(forward, backward, oparams)?;
    let (af, ab) = masked_loss_gradient(i1, i2, forward, backward, &masks, cparams)?;
    let loss = |f: &FlowField, b: &FlowField| {
        masked_loss(i1, i2, f, b, &masks, cparams).map_or(f64::NAN, |r| r.value)
    };
    let (nf, nb) = finite_difference_gradient(loss, forward, backward, step)?;
    let margin = 2.0 * step;
    let (fu, fv) = nondegenerate_components(forward, &masks.include_fwd, margin)?;
    let (bu, bv) = nondegenerate_components(backward, &masks.include_bwd, margin)?;
    Ok(compare_gradients(&af, &nf, &fu, &fv, tolerance)?.merge(&compare_gradients(&ab, &nb, &bu, &bv, tolerance)?))
}
