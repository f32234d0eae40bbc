//! Pixel-wise losses and PSNR.

use crate::error::Result;
use crate::image::Image;

/// PSNR reported for a zero-MSE pair.
pub const PSNR_CAP_DB: f64 = 99.0;

#[inline]
fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Mean absolute difference over all H·W·3 entries.
pub fn l1(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b, "l1")?;
    let n = a.len().max(1) as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// Gradient of [`l1`] with respect to `a`; `sign(0) = 0`.
pub fn l1_adjoint(a: &Image, b: &Image) -> Result<Image> {
    a.check_shape(b, "l1")?;
    let n = a.len().max(1) as f64;
    Ok(a.zip_map(b, |x, y| sign(x - y) / n))
}

pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    a.check_shape(b, "mse")?;
    let n = a.len().max(1) as f64;
    Ok(a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / n)
}

/// PSNR for a peak value of 1.
pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    Ok(psnr_from_mse(mse(a, b)?))
}
