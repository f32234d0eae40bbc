use std::collections::HashSet;
use std::path::PathBuf;
use std::time::Instant;

use rayon::prelude::*;

use super::{build_protocol, metrics_of, render_heldout, save_views, scene_id, MetricsRecord, StabilityReport};
use crate::config::Config;
use crate::error::{Error, Result};
use crate::regularize::ConsistencySchedule;
use crate::scene::{GaussianField, ViewSet};
use crate::trainer::{train, TrainHistory};

/// Training configurations compared by the experiment drivers. Each one
/// overrides only the branch count and consistency weighting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Variant {
    /// Single dropout branch, no consistency.
    Baseline,
    /// Two branches, reconstruction only.
    TwoBranch,
    /// Two branches with the full consistency weight from the start.
    LowFreq,
    /// Two branches with the progressive consistency weight.
    PairDropGs,
    Branches(usize),
}

impl Variant {
    pub const ABLATION: [Variant; 4] = [Variant::Baseline, Variant::TwoBranch, Variant::LowFreq, Variant::PairDropGs];

    pub fn name(&self) -> String {
        match self {
            Variant::Baseline => "baseline".into(),
            Variant::TwoBranch => "two-branch".into(),
            Variant::LowFreq => "low-freq".into(),
            Variant::PairDropGs => "pairdropgs".into(),
            Variant::Branches(n) => format!("branches-{n}"),
        }
    }

    pub fn apply(&self, base: &Config) -> Config {
        let mut c = base.clone();
        match self {
            Variant::Baseline => c.train.branches = 1,
            Variant::TwoBranch => {
                c.train.branches = 2;
                c.loss.lambda_max = 0.0;
            }
            Variant::LowFreq => {
                c.train.branches = 2;
                c.loss.schedule = ConsistencySchedule::Constant;
            }
            Variant::PairDropGs => {
                c.train.branches = 2;
                c.loss.schedule = ConsistencySchedule::Progressive;
            }
            Variant::Branches(n) => c.train.branches = *n,
        }
        c
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Variant::Baseline),
            "two-branch" => Ok(Variant::TwoBranch),
            "low-freq" => Ok(Variant::LowFreq),
            "pairdropgs" => Ok(Variant::PairDropGs),
            other => other
                .strip_prefix("branches-")
                .and_then(|n| n.parse().ok())
                .filter(|n| *n >= 1)
                .map(Variant::Branches)
                .ok_or_else(|| Error::config("variant", format!("unknown variant `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOptions {
    /// Concurrent training jobs; 0 or 1 runs them one after another.
    pub jobs: usize,
    /// Root for held-out renders, saved as `<out>/<variant>/<seed>/view_<k>.ppm`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub variant: Variant,
    pub record: MetricsRecord,
    pub history: TrainHistory,
    pub field: GaussianField,
}

/// Trains `variant` of `base` with training seed `seed` and evaluates it.
pub fn run_variant(
    base: &Config,
    variant: Variant,
    seed: u64,
    truth: &GaussianField,
    views: &ViewSet,
    opts: &ExperimentOptions,
) -> Result<RunOutcome> {
    let mut cfg = variant.apply(base);
    cfg.rng.seed = seed;
    cfg.validate()?;
    let start = Instant::now();
    let (field, history) = train(&cfg, truth, views)?;
    let wall_time_s = start.elapsed().as_secs_f64();
    let renders = render_heldout(&field, views, cfg.image.background, cfg.exec_mode())?;
    if let Some(out) = &opts.out {
        save_views(&renders, out.join(variant.name()).join(seed.to_string()))?;
    }
    let record = MetricsRecord {
        scene_id: scene_id(&cfg),
        variant: variant.name(),
        seed,
        wall_time_s,
        ..metrics_of(&renders, views)?
    };
    log::info!(
        "{} seed {seed}: psnr {:.3} ssim {:.4} ({wall_time_s:.1}s)",
        record.variant,
        record.psnr_mean,
        record.ssim_mean
    );
    Ok(RunOutcome {
        variant,
        record,
        history,
        field,
    })
}

fn run_jobs(base: &Config, jobs: &[(Variant, u64)], opts: &ExperimentOptions) -> Result<Vec<RunOutcome>> {
    let (truth, views) = build_protocol(base)?;
    let one = |&(v, s): &(Variant, u64)| run_variant(base, v, s, &truth, &views, opts);
    if opts.jobs <= 1 {
        return jobs.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.jobs)
        .build()
        .map_err(|e| Error::InvalidProtocol(format!("cannot start job pool: {e}")))?;
    pool.install(|| jobs.par_iter().map(one).collect())
}

fn check_seeds(seeds: &[u64]) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::InvalidProtocol("need at least one seed".into()));
    }
    let mut seen = HashSet::new();
    for s in seeds {
        if !seen.insert(s) {
            return Err(Error::InvalidProtocol(format!("duplicate seed {s}")));
        }
    }
    Ok(())
}

/// One model per (variant, seed); a mean/std summary per variant.
pub fn run_stability(
    cfg: &Config,
    seeds: &[u64],
    variants: &[Variant],
    opts: &ExperimentOptions,
) -> Result<(Vec<StabilityReport>, Vec<RunOutcome>)> {
    check_seeds(seeds)?;
    let jobs: Vec<_> = variants.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    let runs = run_jobs(cfg, &jobs, opts)?;
    let reports = variants
        .iter()
        .map(|v| {
            let recs: Vec<_> = runs.iter().filter(|r| r.variant == *v).map(|r| r.record.clone()).collect();
            StabilityReport::from_records(&v.name(), &recs)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((reports, runs))
}

/// The four ablation variants, each trained with every seed.
pub fn run_ablation(cfg: &Config, seeds: &[u64], opts: &ExperimentOptions) -> Result<Vec<RunOutcome>> {
    check_seeds(seeds)?;
    let jobs: Vec<_> = Variant::ABLATION.iter().flat_map(|&v| seeds.iter().map(move |&s| (v, s))).collect();
    run_jobs(cfg, &jobs, opts)
}

/// Identical runs apart from the branch count.
pub fn run_branch_sweep(cfg: &Config, counts: &[usize], seeds: &[u64], opts: &ExperimentOptions) -> Result<Vec<RunOutcome>> {
    check_seeds(seeds)?;
    if let Some(c) = counts.iter().find(|c| !(1..=4).contains(*c)) {
        return Err(Error::InvalidProtocol(format!("branch count {c} outside 1..=4")));
    }
    let jobs: Vec<_> = counts
        .iter()
        .flat_map(|&n| seeds.iter().map(move |&s| (Variant::Branches(n), s)))
        .collect();
    run_jobs(cfg, &jobs, opts)
}
