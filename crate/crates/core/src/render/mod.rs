//! CPU splatting: projection, front-to-back compositing and the analytic
//! reverse pass.

mod project;
mod raster;

pub use crate::image::Image;
pub use project::{project_gaussian, raw_screen_covariance, Projected2D, COV2D_REGULARIZATION};
pub use raster::{
    composite, composite_weights, render, render_backward, ExecMode, RenderOptions, ALPHA_MAX, MIN_POWER,
    TRANSMITTANCE_EPS,
};
