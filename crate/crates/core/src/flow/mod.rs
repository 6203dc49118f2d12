//! Differentiable kernels for unsupervised flow learning: inverse warping,
//! the generalized Charbonnier penalty, photometric reconstruction loss,
//! forward-backward occlusion flags and the occlusion-aware loss, with
//! analytic gradients with respect to the flow.

mod gradcheck;
mod loss;
mod warp;

pub use gradcheck::{
    check_loss_gradient, compare_gradients, finite_difference_gradient, nondegenerate_components, relative_error,
    GradientCheck,
};
pub use loss::{
    charbonnier, loss_gradient_wrt_flow, masked_loss, masked_loss_gradient, occlusion_aware_loss,
    occlusion_flags, occlusion_masks, reconstruction_loss, CharbonnierParams, LossReport,
    OcclusionMasks, OcclusionParams,
};
pub use warp::{inverse_warp, warp_flow};
