//! Mean local SSIM and its gradient.
//!
//! Local statistics use an 11×11 Gaussian window (σ = 1.5) applied with the
//! same reflect padding as [`gaussian_blur`], so constant images have zero
//! local variance everywhere, including at the borders.

use super::blur::{blur_adjoint, gaussian_blur, BlurKernel};
use crate::error::Result;
use crate::image::Image;

#[derive(Debug, Clone)]
pub struct SsimParams {
    pub window: BlurKernel,
    pub c1: f64,
    pub c2: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            window: BlurKernel::new(11, 1.5).expect("static kernel"),
            c1: 0.01f64.powi(2),
            c2: 0.03f64.powi(2),
        }
    }
}

struct Stats {
    mu_a: Image,
    mu_b: Image,
    e_aa: Image,
    e_bb: Image,
    e_ab: Image,
}

fn stats(a: &Image, b: &Image, p: &SsimParams) -> Stats {
    let w = &p.window;
    Stats {
        mu_a: gaussian_blur(a, w),
        mu_b: gaussian_blur(b, w),
        e_aa: gaussian_blur(&a.zip_map(a, |x, y| x * y), w),
        e_bb: gaussian_blur(&b.zip_map(b, |x, y| x * y), w),
        e_ab: gaussian_blur(&a.zip_map(b, |x, y| x * y), w),
    }
}

pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_with(a, b, &SsimParams::default())
}

pub fn ssim_with(a: &Image, b: &Image, p: &SsimParams) -> Result<f64> {
    a.check_shape(b, "ssim")?;
    let s = stats(a, b, p);
    let mut total = 0.0;
    for i in 0..a.len() {
        let (ma, mb) = (s.mu_a.data[i], s.mu_b.data[i]);
        let va = s.e_aa.data[i] - ma * ma;
        let vb = s.e_bb.data[i] - mb * mb;
        let cov = s.e_ab.data[i] - ma * mb;
        total += ((2.0 * ma * mb + p.c1) * (2.0 * cov + p.c2)) / ((ma * ma + mb * mb + p.c1) * (va + vb + p.c2));
    }
    Ok(total / a.len().max(1) as f64)
}

/// SSIM value together with its gradient with respect to `a`.
pub fn ssim_with_grad(a: &Image, b: &Image, p: &SsimParams) -> Result<(f64, Image)> {
    a.check_shape(b, "ssim")?;
    let s = stats(a, b, p);
    let n = a.len().max(1) as f64;
    let mut g_mu = Image::zeros(a.width, a.height);
    let mut g_eaa = Image::zeros(a.width, a.height);
    let mut g_eab = Image::zeros(a.width, a.height);
    let mut total = 0.0;
    for i in 0..a.len() {
        let (ma, mb) = (s.mu_a.data[i], s.mu_b.data[i]);
        let va = s.e_aa.data[i] - ma * ma;
        let vb = s.e_bb.data[i] - mb * mb;
        let cov = s.e_ab.data[i] - ma * mb;
        let a1 = 2.0 * ma * mb + p.c1;
        let a2 = 2.0 * cov + p.c2;
        let b1 = ma * ma + mb * mb + p.c1;
        let b2 = va + vb + p.c2;
        let d = b1 * b2;
        let val = a1 * a2 / d;
        total += val;
        // Partials treating (mu_a, E[a²], E[ab]) as the independent inputs.
        let d_mu = (2.0 * mb * a2 - 2.0 * mb * a1) / d - val * (2.0 * ma / b1 - 2.0 * ma / b2);
        let d_eaa = -val / b2;
        let d_eab = 2.0 * a1 / d;
        g_mu.data[i] = d_mu / n;
        g_eaa.data[i] = d_eaa / n;
        g_eab.data[i] = d_eab / n;
    }
    let w = &p.window;
    let mut grad = blur_adjoint(&g_mu, w);
    let t_aa = blur_adjoint(&g_eaa, w);
    let t_ab = blur_adjoint(&g_eab, w);
    for i in 0..grad.len() {
        grad.data[i] += 2.0 * a.data[i] * t_aa.data[i] + b.data[i] * t_ab.data[i];
    }
    Ok((total / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(w: usize, h: usize, seed: u64) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _, _| rng.gen::<f64>())
    }

    #[test]
    fn identical_is_one() {
        let a = random_image(16, 16, 0);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn constants_match_scalar_formula() {
        let z = Image::zeros(16, 16);
        let o = Image::filled(16, 16, [1.0; 3]);
        let (c1, c2): (f64, f64) = (1e-4, 9e-4);
        // Scalar SSIM with mu_a = 0, mu_b = 1 and zero (co)variances.
        let (ma, mb, va, vb, cov) = (0.0, 1.0, 0.0, 0.0, 0.0);
        let expect = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        assert!((expect - c1 / (1.0 + c1)).abs() < 1e-18);
        let got = ssim(&z, &o).unwrap();
        assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    }

    #[test]
    fn symmetric_and_bounded() {
        for seed in 0..4 {
            let a = random_image(12, 10, seed);
            let b = random_image(12, 10, seed + 50).map(|v| 1.0 - v);
            let ab = ssim(&a, &b).unwrap();
            let ba = ssim(&b, &a).unwrap();
            assert!((ab - ba).abs() < 1e-12);
            assert!((-1.0..=1.0).contains(&ab));
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = SsimParams::default();
        let a = random_image(16, 16, 11);
        let b = random_image(16, 16, 12);
        let (v, g) = ssim_with_grad(&a, &b, &p).unwrap();
        assert!((v - ssim(&a, &b).unwrap()).abs() < 1e-14);
        let h = 1e-5;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..60 {
            let i = rng.gen_range(0..a.len());
            let mut ap = a.clone();
            ap.data[i] += h;
            let mut am = a.clone();
            am.data[i] -= h;
            let fd = (ssim(&ap, &b).unwrap() - ssim(&am, &b).unwrap()) / (2.0 * h);
            let err = (fd - g.data[i]).abs();
            assert!(err <= 1e-4 * fd.abs().max(g.data[i].abs()) + 1e-9, "entry {i}: fd {fd} vs {}", g.data[i]);
        }
    }
}
