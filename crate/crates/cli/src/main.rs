use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use pairdrop_core::config::{Config, Preset};
use pairdrop_core::dropout::DropoutMask;
use pairdrop_core::harness::{
    build_protocol, emit_curve, emit_report, metrics_of, render_heldout, run_ablation, run_branch_sweep, run_stability,
    save_views, scene_id, ExperimentOptions, MetricsRecord, ReportFormat, RunOutcome, Variant,
};
use pairdrop_core::render::{render, RenderOptions};
use pairdrop_core::scene::{generate_synthetic_scene, GaussianField};
use pairdrop_core::trainer::{load_checkpoint, save_checkpoint, Trainer};
use pairdrop_core::Error;

#[derive(Parser)]
#[command(name = "pairdrop", version, about = "Paired-dropout Gaussian splatting experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON config; missing keys take their defaults
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (output file for gen-scene and render)
    #[arg(long)]
    out: PathBuf,
    /// Overrides rng.seed (scene.seed for gen-scene)
    #[arg(long)]
    seed: Option<u64>,
    /// Force bit-reproducible single-threaded execution
    #[arg(long)]
    serial: bool,
    /// Iteration schedule preset: full or short
    #[arg(long)]
    preset: Option<Preset>,
    /// Concurrent training jobs for multi-run commands
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic ground-truth scene as JSON
    GenScene(Common),
    /// Train one model and write checkpoint, curve, metrics and held-out renders
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from a checkpoint written with the same config
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Also save the checkpoint every N iterations
        #[arg(long, default_value_t = 0)]
        checkpoint_every: usize,
    },
    /// Evaluate a checkpoint or field on the held-out views
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint or scene JSON to evaluate
        #[arg(long)]
        model: PathBuf,
    },
    /// Render one protocol view of a checkpoint or field to PPM
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 0)]
        view: usize,
    },
    /// Multi-seed stability study
    Stability {
        #[command(flatten)]
        common: Common,
        /// Comma-separated training seeds
        #[arg(long, value_delimiter = ',', default_values_t = 1..=10u64)]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',', default_values = ["baseline", "pairdropgs"])]
        variants: Vec<String>,
    },
    /// Component ablation over the four variants
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = 1..=3u64)]
        seeds: Vec<u64>,
    },
    /// Branch-count sweep
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_values_t = [2usize, 3])]
        branches: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = 1..=3u64)]
        seeds: Vec<u64>,
    },
}

/// Failure classes mapped to exit codes 1 and 2.
enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidConfig { .. } | Error::Parse { .. } | Error::InvalidSplit { .. } | Error::InvalidKernel(_) | Error::InvalidRate(_) => {
                Failure::Config(e.to_string())
            }
            other => Failure::Runtime(other.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn runtime(context: &str) -> impl Fn(Error) -> Failure + '_ {
    move |e| Failure::Runtime(format!("{context}: {e}"))
}

fn load_config(c: &Common) -> CliResult<Config> {
    let mut cfg = match &c.config {
        Some(p) => {
            let src = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            Config::from_json(&src).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => Config::default(),
    };
    if let Some(p) = c.preset {
        cfg.apply_preset(p);
    }
    if c.serial {
        cfg.train.serial = true;
    }
    Ok(cfg)
}

fn finish_config(mut cfg: Config, c: &Common) -> CliResult<Config> {
    if let Some(s) = c.seed {
        cfg.rng.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json(path: &Path, value: &serde_json::Value) -> CliResult<()> {
    let s = serde_json::to_string_pretty(value).expect("json serialization cannot fail");
    std::fs::write(path, s).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn prepare_dir(dir: &Path, cfg: &Config) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    let path = dir.join("config.resolved.json");
    std::fs::write(&path, cfg.to_json_pretty()).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn config_value(cfg: &Config) -> serde_json::Value {
    serde_json::to_value(cfg).expect("config serialization cannot fail")
}

fn load_model(path: &Path) -> CliResult<GaussianField> {
    let src = std::fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value =
        serde_json::from_str(&src).map_err(|e| Failure::Runtime(format!("{}: {}", path.display(), Error::from_json(e, &src))))?;
    let parsed = if value.get("adam").is_some() {
        pairdrop_core::trainer::Checkpoint::from_json(&src).map(|c| c.field)
    } else {
        GaussianField::from_json(&src)
    };
    parsed.map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn write_records(dir: &Path, records: &[MetricsRecord]) -> CliResult<()> {
    emit_report(records, ReportFormat::Json, dir.join("records.json")).map_err(runtime("records.json"))?;
    emit_report(records, ReportFormat::Csv, dir.join("records.csv")).map_err(runtime("records.csv"))
}

fn gen_scene(c: &Common) -> CliResult<()> {
    let mut cfg = load_config(c)?;
    if let Some(s) = c.seed {
        cfg.scene.seed = s;
    }
    cfg.validate()?;
    let f = generate_synthetic_scene(cfg.scene.seed, cfg.scene.count, cfg.scene.extent);
    std::fs::write(&c.out, f.to_json()).map_err(|e| Failure::Runtime(format!("{}: {e}", c.out.display())))
}

fn train(c: &Common, resume: Option<&Path>, checkpoint_every: usize) -> CliResult<()> {
    let cfg = finish_config(load_config(c)?, c)?;
    let ckpt = match resume {
        Some(p) => Some(load_checkpoint(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?),
        None => None,
    };
    if let Some(ck) = &ckpt {
        if ck.config_hash != cfg.hash() {
            return Err(Failure::Config("resume: checkpoint was written with a different config".into()));
        }
    }
    let (truth, views) = build_protocol(&cfg)?;
    prepare_dir(&c.out, &cfg)?;
    let ck_path = c.out.join("checkpoint.json");
    let start = std::time::Instant::now();
    let mut trainer = match ckpt {
        Some(ck) => Trainer::from_checkpoint(&cfg, ck, &views)?,
        None => Trainer::new(&cfg, &truth, &views)?,
    };
    let every = if checkpoint_every == 0 { cfg.train.iterations } else { checkpoint_every };
    while trainer.iteration < cfg.train.iterations {
        let next = (trainer.iteration / every + 1) * every;
        if let Err(e) = trainer.run_to(next) {
            if let Some(good) = trainer.last_good_checkpoint() {
                save_checkpoint(good, &ck_path).map_err(runtime("checkpoint"))?;
            }
            return Err(Failure::Runtime(format!("training aborted: {e}")));
        }
        save_checkpoint(&trainer.checkpoint(), &ck_path).map_err(runtime("checkpoint"))?;
        log::info!("iteration {}", trainer.iteration);
    }
    save_checkpoint(&trainer.checkpoint(), &ck_path).map_err(runtime("checkpoint"))?;
    let wall_time_s = start.elapsed().as_secs_f64();
    emit_curve(&trainer.history, c.out.join("curve.csv")).map_err(runtime("curve.csv"))?;
    let renders = render_heldout(&trainer.field, &views, cfg.image.background, cfg.exec_mode())?;
    save_views(&renders, c.out.join("heldout")).map_err(runtime("held-out renders"))?;
    let record = MetricsRecord {
        scene_id: scene_id(&cfg),
        variant: Variant::Branches(cfg.train.branches).name(),
        seed: cfg.rng.seed,
        wall_time_s,
        ..metrics_of(&renders, &views)?
    };
    write_records(&c.out, std::slice::from_ref(&record))?;
    write_json(
        &c.out.join("summary.json"),
        &json!({ "config": config_value(&cfg), "config_hash": cfg.hash(), "iterations": trainer.iteration, "metrics": record }),
    )?;
    println!("held-out psnr {:.4} ssim {:.4}", record.psnr_mean, record.ssim_mean);
    Ok(())
}

fn eval(c: &Common, model: &Path) -> CliResult<()> {
    let cfg = finish_config(load_config(c)?, c)?;
    let field = load_model(model)?;
    let (_, views) = build_protocol(&cfg)?;
    let renders = render_heldout(&field, &views, cfg.image.background, cfg.exec_mode())?;
    let record = MetricsRecord {
        scene_id: scene_id(&cfg),
        variant: "eval".into(),
        seed: cfg.rng.seed,
        ..metrics_of(&renders, &views)?
    };
    prepare_dir(&c.out, &cfg)?;
    save_views(&renders, c.out.join("heldout")).map_err(runtime("held-out renders"))?;
    write_records(&c.out, std::slice::from_ref(&record))?;
    write_json(
        &c.out.join("summary.json"),
        &json!({ "config": config_value(&cfg), "config_hash": cfg.hash(), "model": model, "metrics": record }),
    )?;
    println!("held-out psnr {:.4} ssim {:.4}", record.psnr_mean, record.ssim_mean);
    Ok(())
}

fn render_view(c: &Common, model: &Path, view: usize) -> CliResult<()> {
    let cfg = finish_config(load_config(c)?, c)?;
    if view >= cfg.views.n {
        return Err(Failure::Config(format!("view {view} out of range (views.n = {})", cfg.views.n)));
    }
    let field = load_model(model)?;
    let (_, views) = build_protocol(&cfg)?;
    let opts = RenderOptions {
        mode: cfg.exec_mode(),
        ..RenderOptions::with_background(cfg.image.background)
    };
    let img = render(&field, &DropoutMask::all_kept(field.len()), &views.views[view].0, &opts)?;
    img.write_ppm(&c.out).map_err(runtime("render"))
}

fn summarize_runs(dir: &Path, cfg: &Config, runs: &[RunOutcome], extra: serde_json::Value) -> CliResult<()> {
    let records: Vec<MetricsRecord> = runs.iter().map(|r| r.record.clone()).collect();
    write_records(dir, &records)?;
    for r in runs {
        let name = format!("curve_{}_{}.csv", r.record.variant, r.record.seed);
        emit_curve(&r.history, dir.join(name)).map_err(runtime("curve"))?;
    }
    let mut summary = json!({ "config": config_value(cfg), "config_hash": cfg.hash(), "records": records });
    if let (Some(obj), serde_json::Value::Object(more)) = (summary.as_object_mut(), extra) {
        obj.extend(more);
    }
    write_json(&dir.join("summary.json"), &summary)
}

fn options(c: &Common) -> ExperimentOptions {
    ExperimentOptions {
        jobs: c.jobs,
        out: Some(c.out.clone()),
    }
}

fn stability(c: &Common, seeds: &[u64], variants: &[String]) -> CliResult<()> {
    let cfg = finish_config(load_config(c)?, c)?;
    let variants = variants.iter().map(|v| v.parse::<Variant>()).collect::<Result<Vec<_>, _>>()?;
    let mut sorted = seeds.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != seeds.len() || seeds.is_empty() {
        return Err(Failure::Config("seeds must be non-empty and distinct".into()));
    }
    prepare_dir(&c.out, &cfg)?;
    let (reports, runs) = run_stability(&cfg, seeds, &variants, &options(c))?;
    for r in &reports {
        println!("{}: psnr {:.4} ± {:.4}  ssim {:.4} ± {:.4}  (n={})", r.variant, r.psnr_mean, r.psnr_std, r.ssim_mean, r.ssim_std, r.n_seeds);
    }
    summarize_runs(&c.out, &cfg, &runs, json!({ "stability": reports }))
}

fn ablate(c: &Common, seeds: &[u64]) -> CliResult<()> {
    let cfg = finish_config(load_config(c)?, c)?;
    prepare_dir(&c.out, &cfg)?;
    let runs = run_ablation(&cfg, seeds, &options(c))?;
    for v in Variant::ABLATION {
        let recs: Vec<_> = runs.iter().filter(|r| r.variant == v).collect();
        let mean = recs.iter().map(|r| r.record.psnr_mean).sum::<f64>() / recs.len() as f64;
        println!("{}: mean psnr {mean:.4}", v.name());
    }
    summarize_runs(&c.out, &cfg, &runs, json!({}))
}

fn sweep(c: &Common, branches: &[usize], seeds: &[u64]) -> CliResult<()> {
    let cfg = finish_config(load_config(c)?, c)?;
    if let Some(b) = branches.iter().find(|b| !(1..=4).contains(*b)) {
        return Err(Failure::Config(format!("branch count {b} outside 1..=4")));
    }
    prepare_dir(&c.out, &cfg)?;
    let runs = run_branch_sweep(&cfg, branches, seeds, &options(c))?;
    let rows: Vec<_> = branches
        .iter()
        .map(|&b| {
            let recs: Vec<_> = runs.iter().filter(|r| r.variant == Variant::Branches(b)).collect();
            let n = recs.len() as f64;
            let psnr = recs.iter().map(|r| r.record.psnr_mean).sum::<f64>() / n;
            let wall = recs.iter().map(|r| r.record.wall_time_s).sum::<f64>() / n;
            let pairs = recs[0].history.records.first().map(|r| r.loss.consistency_pairs).unwrap_or(0);
            println!("branches {b}: psnr {psnr:.4}  wall {wall:.1}s  consistency pairs {pairs}");
            json!({ "branches": b, "psnr_mean": psnr, "wall_time_s": wall, "consistency_pairs": pairs })
        })
        .collect();
    summarize_runs(&c.out, &cfg, &runs, json!({ "sweep": rows }))
}

fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::GenScene(c) => gen_scene(c),
        Command::Train { common, resume, checkpoint_every } => train(common, resume.as_deref(), *checkpoint_every),
        Command::Eval { common, model } => eval(common, model),
        Command::Render { common, model, view } => render_view(common, model, *view),
        Command::Stability { common, seeds, variants } => stability(common, seeds, variants),
        Command::Ablate { common, seeds } => ablate(common, seeds),
        Command::Sweep { common, branches, seeds } => sweep(common, branches, seeds),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
