//! Paired-branch training of a shared Gaussian field.
//!
//! Every iteration draws one training view, samples one dropout mask per
//! branch, renders all branches from the same parameters, accumulates the
//! gradient of the combined objective into one buffer and takes a single
//! Adam step. All randomness of iteration `t` is derived from
//! `(rng.seed, t)`, so a run resumed from a checkpoint continues exactly
//! where an uninterrupted run would be.

mod adam;
mod checkpoint;
mod objective;

pub use adam::{adam_step, position_lr, AdamMoments, AdamState, ParamGroup};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use objective::{Objective, Terms};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Config, RateSchedule};
use crate::dropout::{sample_mask, DropoutMask};
use crate::error::{Error, Result};
use crate::harness::{evaluate, MetricsRecord};
use crate::regularize::LossBreakdown;
use crate::scene::{init_field, GaussianField, ViewSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSnapshot {
    /// Number of optimizer steps taken when the snapshot was recorded.
    pub iteration: usize,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub per_view: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<IterationRecord>,
    pub evals: Vec<EvalSnapshot>,
}

/// Seed of the counter-based stream for domain `tag` at counter `t`.
fn derive_seed(seed: u64, tag: u64, t: u64) -> u64 {
    // splitmix64 finalizer over the combined words
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ t.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const TAG_VIEWS: u64 = 1;
const TAG_MASKS: u64 = 2;

/// Training view for iteration `t`: a seeded shuffle of the training set,
/// reshuffled every epoch.
pub fn view_for_iteration(train: &[usize], seed: u64, t: usize) -> usize {
    let n = train.len();
    let epoch = (t / n) as u64;
    let mut order = train.to_vec();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_VIEWS, epoch)));
    order[t % n]
}

/// Generator from which iteration `t` draws its branch masks.
pub fn iteration_rng(seed: u64, t: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, TAG_MASKS, t as u64))
}

pub fn dropout_rate_at(cfg: &Config, t: usize) -> f64 {
    match cfg.dropout.schedule {
        RateSchedule::Constant => cfg.dropout.rate,
        RateSchedule::LinearDecay => cfg.dropout.rate * (1.0 - t as f64 / cfg.train.iterations as f64).max(0.0),
    }
}

pub fn sample_branch_masks(cfg: &Config, n: usize, t: usize) -> Result<Vec<DropoutMask>> {
    let mut rng = iteration_rng(cfg.rng.seed, t);
    let rate = dropout_rate_at(cfg, t);
    (0..cfg.train.branches).map(|_| sample_mask(n, rate, &mut rng)).collect()
}

pub struct Trainer<'a> {
    cfg: Config,
    views: &'a ViewSet,
    objective: Objective,
    pub field: GaussianField,
    pub adam: AdamState,
    pub iteration: usize,
    pub history: TrainHistory,
    last_good: Option<Checkpoint>,
}

impl<'a> Trainer<'a> {
    pub fn new(cfg: &Config, truth: &GaussianField, views: &'a ViewSet) -> Result<Self> {
        let field = init_field(truth, cfg.init.mode, cfg.init.noise, cfg.init.seed);
        Self::with_field(cfg, field, views)
    }

    pub fn with_field(cfg: &Config, field: GaussianField, views: &'a ViewSet) -> Result<Self> {
        cfg.validate()?;
        if views.train.is_empty() {
            return Err(Error::InvalidProtocol("need at least one training view".into()));
        }
        let adam = AdamState::new(field.len(), cfg.lr.clone());
        Ok(Self {
            cfg: cfg.clone(),
            views,
            objective: Objective::from_config(cfg)?,
            field,
            adam,
            iteration: 0,
            history: TrainHistory::default(),
            last_good: None,
        })
    }

    pub fn from_checkpoint(cfg: &Config, ckpt: Checkpoint, views: &'a ViewSet) -> Result<Self> {
        if ckpt.config_hash != cfg.hash() {
            return Err(Error::config("checkpoint", "config hash does not match the checkpoint"));
        }
        let mut t = Self::with_field(cfg, ckpt.field, views)?;
        t.adam = AdamState::restore(ckpt.adam, cfg.lr.clone());
        if t.adam.m.len() != t.field.len() || t.adam.v.len() != t.field.len() {
            return Err(Error::Shape("checkpoint moments do not match the field".into()));
        }
        t.iteration = ckpt.iteration;
        Ok(t)
    }

    pub fn config(&self) -> &Config {
        &self.cfg
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            iteration: self.iteration,
            field: self.field.clone(),
            adam: self.adam.moments(),
            config_hash: self.cfg.hash(),
        }
    }

    /// One full training iteration at the current counter.
    pub fn step(&mut self) -> Result<LossBreakdown> {
        let t = self.iteration;
        if t >= self.cfg.train.iterations {
            return Err(Error::InvalidProtocol(format!(
                "iteration {t} is past the configured {} iterations",
                self.cfg.train.iterations
            )));
        }
        let loss = train_iteration(&mut self.field, &mut self.adam, self.views, &self.cfg, &self.objective, t)?;
        self.iteration += 1;
        self.history.records.push(IterationRecord { iteration: t, loss });
        Ok(loss)
    }

    pub fn evaluate(&self) -> Result<MetricsRecord> {
        evaluate(&self.field, self.views, self.cfg.image.background, self.cfg.exec_mode())
    }

    fn snapshot(&mut self) -> Result<()> {
        let m = self.evaluate()?;
        self.history.evals.push(EvalSnapshot {
            iteration: self.iteration,
            psnr_mean: m.psnr_mean,
            ssim_mean: m.ssim_mean,
            per_view: m.per_view.iter().map(|v| (v.view, v.psnr, v.ssim)).collect(),
        });
        Ok(())
    }

    /// Trains until `until` iterations have been taken (capped at the config).
    pub fn run_to(&mut self, until: usize) -> Result<()> {
        let until = until.min(self.cfg.train.iterations);
        let every = self.cfg.train.eval_every;
        if self.iteration == 0 && every > 0 && self.history.evals.is_empty() {
            self.snapshot()?;
        }
        while self.iteration < until {
            self.last_good = Some(self.checkpoint());
            let loss = self.step()?;
            if !loss.total.is_finite() {
                return Err(Error::NonFiniteLoss {
                    iteration: self.iteration - 1,
                });
            }
            if every > 0 && self.iteration % every == 0 {
                self.snapshot()?;
            }
        }
        Ok(())
    }

    /// State before the iteration that failed, if a run aborted.
    pub fn last_good_checkpoint(&self) -> Option<&Checkpoint> {
        self.last_good.as_ref()
    }
}

/// Samples branch masks for iteration `t`, accumulates the objective's
/// gradient on the shared field and applies one Adam step.
pub fn train_iteration(
    field: &mut GaussianField,
    adam: &mut AdamState,
    views: &ViewSet,
    cfg: &Config,
    objective: &Objective,
    t: usize,
) -> Result<LossBreakdown> {
    let view = view_for_iteration(&views.train, cfg.rng.seed, t);
    let (cam, gt) = &views.views[view];
    let masks = sample_branch_masks(cfg, field.len(), t)?;
    field.zero_grads();
    let loss = objective.accumulate(field, &masks, cam, gt, t)?;
    if !loss.total.is_finite() {
        return Ok(loss);
    }
    adam.lr.position = position_lr(&cfg.lr, t, cfg.train.iterations);
    adam_step(field, adam)?;
    Ok(loss)
}

/// Trains a fresh field for `cfg.train.iterations` iterations.
pub fn train(cfg: &Config, truth: &GaussianField, views: &ViewSet) -> Result<(GaussianField, TrainHistory)> {
    let mut trainer = Trainer::new(cfg, truth, views)?;
    trainer.run_to(cfg.train.iterations)?;
    if cfg.train.eval_every == 0 || trainer.history.evals.last().map(|e| e.iteration) != Some(trainer.iteration) {
        trainer.snapshot()?;
    }
    Ok((trainer.field, trainer.history))
}
