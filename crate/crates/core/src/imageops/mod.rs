//! Differentiable image-space operators.

mod blur;
mod metrics;
mod ssim;

pub use blur::{blur_adjoint, gaussian_blur, reflect_index, BlurKernel};
pub use metrics::{l1, l1_adjoint, mse, psnr, psnr_from_mse, PSNR_CAP_DB};
pub use ssim::{ssim, ssim_with, ssim_with_grad, SsimParams};
