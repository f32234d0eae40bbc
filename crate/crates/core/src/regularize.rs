//! Loss stack for paired-branch training: photometric reconstruction,
//! paired reconstruction, low-frequency consistency with stop-gradient,
//! the progressive consistency weight, and the multi-branch pairing.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::imageops::{blur_adjoint, gaussian_blur, l1, l1_adjoint, ssim_with_grad, BlurKernel, SsimParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_dssim: f64,
    /// Reconstruction weight of every auxiliary branch.
    pub beta: f64,
    pub lambda_max: f64,
    pub t_warm: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_dssim: 0.2,
            beta: 0.25,
            lambda_max: 0.05,
            t_warm: 7000,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (key, v) in [
            ("loss.lambda_dssim", self.lambda_dssim),
            ("loss.beta", self.beta),
            ("loss.lambda_max", self.lambda_max),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(key, format!("must be a non-negative number, got {v}")));
            }
        }
        if self.t_warm == 0 {
            return Err(Error::config("loss.t_warm", "must be at least 1"));
        }
        Ok(())
    }
}

/// One iteration's loss terms. `rgb_b` sums the auxiliary branches.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub rgb_a: f64,
    pub rgb_b: f64,
    pub lfc: f64,
    pub lambda_t: f64,
    pub total: f64,
    /// Number of pairwise consistency terms averaged into `lfc`.
    pub consistency_pairs: usize,
}

impl LossBreakdown {
    /// Residual of `total = rgb_a + beta * rgb_b + lambda_t * lfc`.
    pub fn reassembly_error(&self, beta: f64) -> f64 {
        (self.total - (self.rgb_a + beta * self.rgb_b + self.lambda_t * self.lfc)).abs()
    }
}

/// `L1 + λ_dssim (1 - SSIM)` and its gradient with respect to `render`.
pub fn rgb_loss(render: &Image, gt: &Image, lambda_dssim: f64) -> Result<(f64, Image)> {
    render.check_shape(gt, "rgb_loss")?;
    let l = l1(render, gt)?;
    let mut grad = l1_adjoint(render, gt)?;
    if lambda_dssim == 0.0 {
        return Ok((l, grad));
    }
    let (s, ds) = ssim_with_grad(render, gt, &SsimParams::default())?;
    grad.add_scaled(&ds, -lambda_dssim);
    Ok((l + lambda_dssim * (1.0 - s), grad))
}

pub fn paired_rec_loss(loss_a: f64, loss_b: f64, beta: f64) -> f64 {
    loss_a + beta * loss_b
}

/// Mean |Φ(a) − Φ(b)| with `b` treated as a constant; gradient flows to `a` only.
pub fn lfc_loss(img_a: &Image, img_b_detached: &Image, kernel: &BlurKernel) -> Result<(f64, Image)> {
    img_a.check_shape(img_b_detached, "lfc_loss")?;
    let fa = gaussian_blur(img_a, kernel);
    let fb = gaussian_blur(img_b_detached, kernel);
    let value = l1(&fa, &fb)?;
    let grad = blur_adjoint(&l1_adjoint(&fa, &fb)?, kernel);
    Ok((value, grad))
}

/// `λ_max · min(1, t / T_warm)`
pub fn lambda_schedule(t: usize, lambda_max: f64, t_warm: usize) -> Result<f64> {
    if t_warm == 0 {
        return Err(Error::config("loss.t_warm", "must be at least 1"));
    }
    if t >= t_warm {
        return Ok(lambda_max);
    }
    Ok(lambda_max * (t as f64 / t_warm as f64))
}

/// How the consistency weight evolves over training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConsistencySchedule {
    /// Linear warm-up to `λ_max` over `T_warm` iterations.
    #[default]
    Progressive,
    /// `λ_max` from the first iteration.
    Constant,
}

impl ConsistencySchedule {
    pub fn weight(&self, t: usize, w: &LossWeights) -> Result<f64> {
        match self {
            ConsistencySchedule::Progressive => lambda_schedule(t, w.lambda_max, w.t_warm),
            ConsistencySchedule::Constant => Ok(w.lambda_max),
        }
    }
}

pub fn total_loss(rgb_a: f64, rgb_b: f64, lfc: f64, weights: &LossWeights, t: usize) -> Result<LossBreakdown> {
    total_loss_with(rgb_a, rgb_b, lfc, weights, t, ConsistencySchedule::Progressive, 1)
}

pub fn total_loss_with(
    rgb_a: f64,
    rgb_b: f64,
    lfc: f64,
    weights: &LossWeights,
    t: usize,
    schedule: ConsistencySchedule,
    consistency_pairs: usize,
) -> Result<LossBreakdown> {
    let lambda_t = schedule.weight(t, weights)?;
    Ok(LossBreakdown {
        rgb_a,
        rgb_b,
        lfc,
        lambda_t,
        total: paired_rec_loss(rgb_a, rgb_b, weights.beta) + lambda_t * lfc,
        consistency_pairs,
    })
}

/// One consistency term: `learner` receives gradient, `target` is detached.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchPair {
    pub target: usize,
    pub learner: usize,
}

/// All `C(b, 2)` pairs; the lower index learns from the detached higher
/// index. With `symmetric`, each pair also appears in the reverse direction.
pub fn multibranch_pairs(branches: usize, symmetric: bool) -> Result<Vec<BranchPair>> {
    if branches < 2 {
        return Err(Error::config("train.branches", "consistency needs at least 2 branches"));
    }
    let mut pairs = Vec::new();
    for i in 0..branches {
        for j in i + 1..branches {
            pairs.push(BranchPair { target: j, learner: i });
            if symmetric {
                pairs.push(BranchPair { target: i, learner: j });
            }
        }
    }
    Ok(pairs)
}

/// Mean consistency loss over `pairs` and its gradient for every branch.
pub fn multibranch_lfc(renders: &[Image], pairs: &[BranchPair], kernel: &BlurKernel) -> Result<(f64, Vec<Image>)> {
    let mut grads: Vec<Image> = renders.iter().map(|r| Image::zeros(r.width, r.height)).collect();
    if pairs.is_empty() {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut total = 0.0;
    for p in pairs {
        let (v, g) = lfc_loss(&renders[p.learner], &renders[p.target], kernel)?;
        total += v;
        grads[p.learner].add_scaled(&g, scale);
    }
    Ok((total * scale, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imageops::ssim;

    #[test]
    fn rgb_loss_cases() {
        let a = Image::from_fn(16, 16, |x, y, c| ((x * 3 + y * 5 + c) % 7) as f64 / 7.0);
        assert_eq!(rgb_loss(&a, &a, 0.2).unwrap().0, 0.0);
        let b = a.map(|v| 1.0 - v);
        assert_eq!(rgb_loss(&a, &b, 0.0).unwrap().0, l1(&a, &b).unwrap());

        let z = Image::zeros(16, 16);
        let o = Image::filled(16, 16, [1.0; 3]);
        let (c1, c2) = (1e-4f64, 9e-4f64);
        let ssim01 = (c1 * c2) / ((1.0 + c1) * c2);
        assert!((ssim(&z, &o).unwrap() - ssim01).abs() < 1e-15);
        let got = rgb_loss(&z, &o, 0.2).unwrap().0;
        assert!((got - (1.0 + 0.2 * (1.0 - ssim01))).abs() < 1e-12);
        assert!(rgb_loss(&z, &Image::zeros(4, 4), 0.2).is_err());
    }

    #[test]
    fn paired_rec() {
        assert_eq!(paired_rec_loss(0.0, 0.0, 0.25), 0.0);
        assert!((paired_rec_loss(0.2, 0.4, 0.25) - 0.3).abs() < 1e-15);
        assert_eq!(paired_rec_loss(0.7, 0.4, 0.0), 0.7);
    }

    #[test]
    fn lfc_cases() {
        let k = BlurKernel::new(11, 3.0).unwrap();
        let a = Image::from_fn(12, 12, |x, y, c| ((x + y + c) % 4) as f64 * 0.25);
        let (v, g) = lfc_loss(&a, &a, &k).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.data.iter().all(|x| *x == 0.0));
        let (v, _) = lfc_loss(&Image::zeros(12, 12), &Image::filled(12, 12, [1.0; 3]), &k).unwrap();
        assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn schedule() {
        assert_eq!(lambda_schedule(0, 0.05, 7000).unwrap(), 0.0);
        assert_eq!(lambda_schedule(7000, 0.05, 7000).unwrap(), 0.05);
        assert_eq!(lambda_schedule(3500, 0.05, 7000).unwrap(), 0.025);
        assert_eq!(lambda_schedule(9000, 0.05, 7000).unwrap(), 0.05);
        assert!(lambda_schedule(3, 0.05, 0).is_err());
        let mut prev = 0.0;
        for t in 0..8000 {
            let l = lambda_schedule(t, 0.05, 7000).unwrap();
            assert!(l >= prev);
            prev = l;
        }
    }

    #[test]
    fn total_loss_cases() {
        let w = LossWeights::default();
        let b = total_loss(0.2, 0.4, 0.1, &w, 0).unwrap();
        assert!((b.total - 0.3).abs() < 1e-15);
        let b = total_loss(0.2, 0.4, 0.0, &w, 8000).unwrap();
        assert!((b.total - 0.3).abs() < 1e-15);
        let b = total_loss(0.2, 0.4, 0.1, &w, 7000).unwrap();
        assert!((b.total - 0.305).abs() < 1e-15);
        assert!(b.reassembly_error(w.beta) <= 1e-10);
    }

    #[test]
    fn pair_counts() {
        assert!(multibranch_pairs(1, false).is_err());
        assert_eq!(multibranch_pairs(2, false).unwrap(), vec![BranchPair { target: 1, learner: 0 }]);
        assert_eq!(multibranch_pairs(3, false).unwrap().len(), 3);
        assert_eq!(multibranch_pairs(4, false).unwrap().len(), 6);
        assert_eq!(multibranch_pairs(3, true).unwrap().len(), 6);
    }

    #[test]
    fn detached_branch_gets_no_gradient() {
        let k = BlurKernel::new(5, 1.0).unwrap();
        let a = Image::from_fn(10, 10, |x, _, _| x as f64 / 10.0);
        let b = Image::from_fn(10, 10, |_, y, _| y as f64 / 10.0);
        let (_, grads) = multibranch_lfc(&[a, b], &multibranch_pairs(2, false).unwrap(), &k).unwrap();
        assert!(grads[1].data.iter().all(|v| *v == 0.0));
        assert!(grads[0].data.iter().any(|v| *v != 0.0));
    }
}
