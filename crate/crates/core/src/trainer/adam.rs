//! Adam with per-parameter-group learning rates.

use serde::{Deserialize, Serialize};

use crate::config::LearningRates;
use crate::error::{Error, Result};
use crate::scene::{GaussianField, GaussianPrimitive, PARAMS_PER_PRIMITIVE};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamGroup {
    Position,
    Scale,
    Rotation,
    Opacity,
    Color,
}

impl ParamGroup {
    pub fn name(&self) -> &'static str {
        match self {
            ParamGroup::Position => "position",
            ParamGroup::Scale => "log_scale",
            ParamGroup::Rotation => "rotation",
            ParamGroup::Opacity => "opacity_logit",
            ParamGroup::Color => "color_logit",
        }
    }

    /// Group of entry `k` in the 14-scalar primitive layout.
    pub fn of_index(k: usize) -> ParamGroup {
        match k {
            0..=2 => ParamGroup::Position,
            3..=5 => ParamGroup::Scale,
            6..=9 => ParamGroup::Rotation,
            10 => ParamGroup::Opacity,
            _ => ParamGroup::Color,
        }
    }
}

const GROUP_OF: [ParamGroup; PARAMS_PER_PRIMITIVE] = {
    let mut g = [ParamGroup::Position; PARAMS_PER_PRIMITIVE];
    let mut k = 3;
    while k < PARAMS_PER_PRIMITIVE {
        g[k] = match k {
            3..=5 => ParamGroup::Scale,
            6..=9 => ParamGroup::Rotation,
            10 => ParamGroup::Opacity,
            _ => ParamGroup::Color,
        };
        k += 1;
    }
    g
};

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<GaussianPrimitive>,
    pub v: Vec<GaussianPrimitive>,
    pub step_count: u64,
    pub lr: LearningRates,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Serialized moments; the hyperparameters come from the config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamMoments {
    pub m: Vec<GaussianPrimitive>,
    pub v: Vec<GaussianPrimitive>,
    pub step: u64,
}

impl AdamState {
    pub fn new(n: usize, lr: LearningRates) -> Self {
        Self {
            m: vec![GaussianPrimitive::default(); n],
            v: vec![GaussianPrimitive::default(); n],
            step_count: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }

    pub fn group_lr(&self, g: ParamGroup) -> f64 {
        match g {
            ParamGroup::Position => self.lr.position,
            ParamGroup::Scale => self.lr.scale,
            ParamGroup::Rotation => self.lr.rotation,
            ParamGroup::Opacity => self.lr.opacity,
            ParamGroup::Color => self.lr.color,
        }
    }

    pub fn moments(&self) -> AdamMoments {
        AdamMoments {
            m: self.m.clone(),
            v: self.v.clone(),
            step: self.step_count,
        }
    }

    pub fn restore(moments: AdamMoments, lr: LearningRates) -> Self {
        Self {
            m: moments.m,
            v: moments.v,
            step_count: moments.step,
            ..Self::new(0, lr)
        }
    }
}

/// Exponential interpolation of the position rate at progress `t / total`.
pub fn position_lr(lr: &LearningRates, t: usize, total: usize) -> f64 {
    if lr.position <= 0.0 {
        return 0.0;
    }
    let frac = (t as f64 / total.max(1) as f64).clamp(0.0, 1.0);
    (lr.position.ln() * (1.0 - frac) + lr.position_final.ln() * frac).exp()
}

/// One bias-corrected Adam update of every parameter; zeroes `field.grads`.
pub fn adam_step(field: &mut GaussianField, state: &mut AdamState) -> Result<()> {
    if state.m.len() != field.len() || state.v.len() != field.len() || field.grads.len() != field.len() {
        return Err(Error::Shape("optimizer state does not match field".into()));
    }
    for g in &field.grads {
        for (k, v) in g.to_array().iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::NonFiniteGradient {
                    group: GROUP_OF[k].name(),
                });
            }
        }
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let lrs: [f64; PARAMS_PER_PRIMITIVE] = GROUP_OF.map(|g| state.group_lr(g));
    for i in 0..field.len() {
        let grad = field.grads[i].to_array();
        let mut p = field.primitives[i].to_array();
        let mut m = state.m[i].to_array();
        let mut v = state.v[i].to_array();
        for k in 0..PARAMS_PER_PRIMITIVE {
            m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * grad[k];
            v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * grad[k] * grad[k];
            let m_hat = m[k] / bc1;
            let v_hat = v[k] / bc2;
            p[k] -= lrs[k] * m_hat / (v_hat.sqrt() + state.eps);
        }
        field.primitives[i] = GaussianPrimitive::from_array(&p);
        state.m[i] = GaussianPrimitive::from_array(&m);
        state.v[i] = GaussianPrimitive::from_array(&v);
    }
    field.zero_grads();
    Ok(())
}
