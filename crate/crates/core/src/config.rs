//! Experiment configuration.
//!
//! Configs are JSON documents grouped by subsystem. Unknown keys are
//! rejected and missing keys take the defaults below. The defaults for
//! loss weights, blur and schedule length are the published hyperparameters;
//! [`Config::desk`] shrinks the schedule for CPU-sized runs.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dropout::RNG_NAME;
use crate::error::{Error, Result};
use crate::imageops::BlurKernel;
use crate::regularize::{ConsistencySchedule, LossWeights};
use crate::render::{ExecMode, RenderOptions};
use crate::scene::InitMode;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub count: usize,
    pub extent: f64,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            count: 200,
            extent: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewsConfig {
    pub n: usize,
    pub train: usize,
    pub radius: f64,
    pub fov_deg: f64,
    pub split_seed: u64,
}

impl Default for ViewsConfig {
    fn default() -> Self {
        Self {
            n: 12,
            train: 3,
            radius: 4.0,
            fov_deg: 50.0,
            split_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImageConfig {
    pub size: usize,
    pub background: [f64; 3],
}

impl Default for ImageConfig {
    fn default() -> Self {
        Self {
            size: 64,
            background: [0.0; 3],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitConfig {
    pub mode: InitMode,
    pub noise: f64,
    pub seed: u64,
}

impl Default for InitConfig {
    fn default() -> Self {
        Self {
            mode: InitMode::NoisyTruth,
            noise: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RateSchedule {
    #[default]
    Constant,
    /// Linear decay from `rate` to zero over the run.
    LinearDecay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DropoutConfig {
    pub rate: f64,
    pub compensation: bool,
    pub schedule: RateSchedule,
}

impl Default for DropoutConfig {
    fn default() -> Self {
        Self {
            rate: 0.1,
            compensation: true,
            schedule: RateSchedule::Constant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda_dssim: f64,
    pub beta: f64,
    pub lambda_max: f64,
    pub t_warm: usize,
    pub schedule: ConsistencySchedule,
    /// Average both detach directions per pair.
    pub symmetric: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        let w = LossWeights::default();
        Self {
            lambda_dssim: w.lambda_dssim,
            beta: w.beta,
            lambda_max: w.lambda_max,
            t_warm: w.t_warm,
            schedule: ConsistencySchedule::Progressive,
            symmetric: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub iterations: usize,
    pub branches: usize,
    /// Held-out evaluation period; 0 evaluates only at the start and end.
    pub eval_every: usize,
    pub serial: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            iterations: 10000,
            branches: 2,
            eval_every: 0,
            serial: true,
        }
    }
}

/// Per-group Adam learning rates. Position decays exponentially from
/// `position` to `position_final` over the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position: f64,
    pub position_final: f64,
    pub scale: f64,
    pub rotation: f64,
    pub opacity: f64,
    pub color: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position: 1.6e-4,
            position_final: 1.6e-6,
            scale: 5e-3,
            rotation: 1e-3,
            opacity: 5e-2,
            color: 2.5e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlurConfig {
    pub size: usize,
    pub sigma: f64,
}

impl Default for BlurConfig {
    fn default() -> Self {
        Self { size: 11, sigma: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RngConfig {
    pub seed: u64,
    pub name: String,
}

impl Default for RngConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            name: RNG_NAME.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub scene: SceneConfig,
    pub views: ViewsConfig,
    pub image: ImageConfig,
    pub init: InitConfig,
    pub dropout: DropoutConfig,
    pub loss: LossConfig,
    pub train: TrainSection,
    pub lr: LearningRates,
    pub blur: BlurConfig,
    pub rng: RngConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// 10000 iterations, warm-up 7000.
    Full,
    /// 5000 iterations, warm-up 4000.
    Short,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "short" => Ok(Preset::Short),
            other => Err(Error::config("preset", format!("unknown preset `{other}` (expected full or short)"))),
        }
    }
}

impl Config {
    /// Desk-scale protocol: 2000 iterations with the warm-up scaled to 1400.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.train.iterations = 2000;
        c.loss.t_warm = 1400;
        c
    }

    pub fn apply_preset(&mut self, preset: Preset) {
        let (iters, warm) = match preset {
            Preset::Full => (10000, 7000),
            Preset::Short => (5000, 4000),
        };
        self.train.iterations = iters;
        self.loss.t_warm = warm;
    }

    pub fn from_json(src: &str) -> Result<Self> {
        let cfg: Config = serde_json::from_str(src).map_err(|e| Error::from_json(e, src))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |key: &str, v: f64| -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        let nonneg = |key: &str, v: f64| -> Result<()> {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be non-negative, got {v}")))
            }
        };
        if self.scene.count == 0 {
            return Err(Error::config("scene.count", "must be at least 1"));
        }
        pos("scene.extent", self.scene.extent)?;
        if self.views.n < 2 {
            return Err(Error::config("views.n", "need at least 2 views"));
        }
        if self.views.train == 0 || self.views.train >= self.views.n {
            return Err(Error::config("views.train", format!("must be in 1..{}", self.views.n)));
        }
        pos("views.radius", self.views.radius)?;
        if !(self.views.fov_deg > 0.0 && self.views.fov_deg < 180.0) {
            return Err(Error::config("views.fov_deg", "must be in (0, 180)"));
        }
        if self.image.size == 0 {
            return Err(Error::config("image.size", "must be at least 1"));
        }
        if self.image.background.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::config("image.background", "channels must lie in [0, 1]"));
        }
        nonneg("init.noise", self.init.noise)?;
        if !(0.0..=1.0).contains(&self.dropout.rate) {
            return Err(Error::config("dropout.rate", format!("must be in [0, 1], got {}", self.dropout.rate)));
        }
        if self.dropout.compensation && self.dropout.rate >= 1.0 {
            return Err(Error::config("dropout.rate", "compensation requires a rate below 1"));
        }
        self.weights().validate()?;
        if self.train.iterations == 0 {
            return Err(Error::config("train.iterations", "must be at least 1"));
        }
        if self.train.branches == 0 {
            return Err(Error::config("train.branches", "must be at least 1"));
        }
        for (key, v) in [
            ("lr.position", self.lr.position),
            ("lr.position_final", self.lr.position_final),
            ("lr.scale", self.lr.scale),
            ("lr.rotation", self.lr.rotation),
            ("lr.opacity", self.lr.opacity),
            ("lr.color", self.lr.color),
        ] {
            nonneg(key, v)?;
        }
        if self.lr.position > 0.0 && self.lr.position_final <= 0.0 {
            return Err(Error::config("lr.position_final", "must be positive when lr.position is"));
        }
        BlurKernel::new(self.blur.size, self.blur.sigma).map_err(|e| Error::config("blur.size", e.to_string()))?;
        if self.rng.name != RNG_NAME {
            return Err(Error::config("rng.name", format!("unsupported generator `{}` (expected {RNG_NAME})", self.rng.name)));
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            lambda_dssim: self.loss.lambda_dssim,
            beta: self.loss.beta,
            lambda_max: self.loss.lambda_max,
            t_warm: self.loss.t_warm,
        }
    }

    pub fn blur_kernel(&self) -> Result<BlurKernel> {
        BlurKernel::new(self.blur.size, self.blur.sigma)
    }

    pub fn exec_mode(&self) -> ExecMode {
        if self.train.serial {
            ExecMode::Serial
        } else {
            ExecMode::Parallel
        }
    }

    pub fn train_render_options(&self) -> RenderOptions {
        RenderOptions {
            background: self.image.background,
            compensate: self.dropout.compensation,
            early_stop: true,
            mode: self.exec_mode(),
        }
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialization cannot fail");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    /// Hash of everything except the keys that distinguish ablation variants
    /// and the training seed.
    pub fn protocol_hash(&self) -> String {
        let mut c = self.clone();
        c.train.branches = 0;
        c.loss.lambda_max = 0.0;
        c.loss.schedule = ConsistencySchedule::Progressive;
        c.rng.seed = 0;
        c.hash()
    }
}
