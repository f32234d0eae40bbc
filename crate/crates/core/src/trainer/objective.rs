//! The combined multi-branch objective and its gradient on the shared field.

use rayon::prelude::*;

use crate::config::Config;
use crate::dropout::DropoutMask;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::imageops::BlurKernel;
use crate::regularize::{multibranch_lfc, multibranch_pairs, rgb_loss, total_loss_with, ConsistencySchedule, LossBreakdown, LossWeights};
use crate::render::{render, render_backward, ExecMode, RenderOptions};
use crate::scene::{Camera, GaussianField};

/// Which loss families contribute gradient. Values are always reported.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Terms {
    pub reconstruction: bool,
    pub consistency: bool,
}

impl Default for Terms {
    fn default() -> Self {
        Self {
            reconstruction: true,
            consistency: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Objective {
    pub weights: LossWeights,
    pub schedule: ConsistencySchedule,
    pub symmetric: bool,
    pub kernel: BlurKernel,
    pub render: RenderOptions,
    pub terms: Terms,
}

impl Objective {
    pub fn from_config(cfg: &Config) -> Result<Self> {
        Ok(Self {
            weights: cfg.weights(),
            schedule: cfg.loss.schedule,
            symmetric: cfg.loss.symmetric,
            kernel: cfg.blur_kernel()?,
            render: cfg.train_render_options(),
            terms: Terms::default(),
        })
    }

    fn render_all(&self, field: &GaussianField, masks: &[DropoutMask], cam: &Camera) -> Result<Vec<Image>> {
        match self.render.mode {
            ExecMode::Serial => masks.iter().map(|m| render(field, m, cam, &self.render)).collect(),
            ExecMode::Parallel => masks.par_iter().map(|m| render(field, m, cam, &self.render)).collect(),
        }
    }

    /// Loss value only (no gradient side effects).
    pub fn value(&self, field: &GaussianField, masks: &[DropoutMask], cam: &Camera, gt: &Image, t: usize) -> Result<LossBreakdown> {
        let renders = self.render_all(field, masks, cam)?;
        Ok(self.losses(&renders, gt, t)?.0)
    }

    pub fn render_branches(&self, field: &GaussianField, masks: &[DropoutMask], cam: &Camera) -> Result<Vec<Image>> {
        self.render_all(field, masks, cam)
    }

    fn losses(&self, renders: &[Image], gt: &Image, t: usize) -> Result<(LossBreakdown, Vec<Image>)> {
        if renders.is_empty() {
            return Err(Error::config("train.branches", "must be at least 1"));
        }
        let mut rgb = Vec::with_capacity(renders.len());
        let mut upstream = Vec::with_capacity(renders.len());
        for (k, r) in renders.iter().enumerate() {
            let (l, mut g) = rgb_loss(r, gt, self.weights.lambda_dssim)?;
            let w = if k == 0 { 1.0 } else { self.weights.beta };
            if self.terms.reconstruction {
                g.data.iter_mut().for_each(|v| *v *= w);
            } else {
                g = Image::zeros(r.width, r.height);
            }
            rgb.push(l);
            upstream.push(g);
        }
        let (lfc, pairs) = if renders.len() >= 2 {
            let pairs = multibranch_pairs(renders.len(), self.symmetric)?;
            let (v, grads) = multibranch_lfc(renders, &pairs, &self.kernel)?;
            let lambda_t = self.schedule.weight(t, &self.weights)?;
            if self.terms.consistency && lambda_t != 0.0 {
                for (u, g) in upstream.iter_mut().zip(&grads) {
                    u.add_scaled(g, lambda_t);
                }
            }
            (v, pairs.len())
        } else {
            (0.0, 0)
        };
        let breakdown = total_loss_with(rgb[0], rgb[1..].iter().sum(), lfc, &self.weights, t, self.schedule, pairs)?;
        Ok((breakdown, upstream))
    }

    /// Evaluates the objective and accumulates its gradient into `field.grads`,
    /// one branch at a time in branch order.
    pub fn accumulate(
        &self,
        field: &mut GaussianField,
        masks: &[DropoutMask],
        cam: &Camera,
        gt: &Image,
        t: usize,
    ) -> Result<LossBreakdown> {
        let renders = self.render_all(field, masks, cam)?;
        let (breakdown, upstream) = self.losses(&renders, gt, t)?;
        for (mask, up) in masks.iter().zip(&upstream) {
            render_backward(field, mask, cam, &self.render, up)?;
        }
        Ok(breakdown)
    }
}
