use std::path::Path;

use serde::{Deserialize, Serialize};

use super::MetricsRecord;
use crate::error::{Error, Result};
use crate::trainer::TrainHistory;

pub const CSV_HEADER: [&str; 6] = ["scene_id", "variant", "seed", "psnr", "ssim", "wall_time_s"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            other => Err(Error::config("format", format!("unknown report format `{other}`"))),
        }
    }
}

/// Mean and sample standard deviation of held-out metrics across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub variant: String,
    pub n_seeds: usize,
    pub psnr_mean: f64,
    pub psnr_std: f64,
    pub ssim_mean: f64,
    pub ssim_std: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl StabilityReport {
    pub fn from_records(variant: &str, records: &[MetricsRecord]) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::InvalidProtocol("stability report needs at least one record".into()));
        }
        let (psnr_mean, psnr_std) = mean_std(&records.iter().map(|r| r.psnr_mean).collect::<Vec<_>>());
        let (ssim_mean, ssim_std) = mean_std(&records.iter().map(|r| r.ssim_mean).collect::<Vec<_>>());
        Ok(Self {
            variant: variant.to_string(),
            n_seeds: records.len(),
            psnr_mean,
            psnr_std,
            ssim_mean,
            ssim_std,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// JSON array of records, or one CSV row per record under [`CSV_HEADER`].
pub fn emit_report(records: &[MetricsRecord], format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    match format {
        ReportFormat::Json => {
            let s = serde_json::to_string_pretty(records).expect("report serialization cannot fail");
            std::fs::write(path, s)?;
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
            w.write_record(CSV_HEADER).map_err(csv_err)?;
            for r in records {
                w.write_record([
                    r.scene_id.clone(),
                    r.variant.clone(),
                    r.seed.to_string(),
                    r.psnr_mean.to_string(),
                    r.ssim_mean.to_string(),
                    r.wall_time_s.to_string(),
                ])
                .map_err(csv_err)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

pub fn parse_report(src: &str) -> Result<Vec<MetricsRecord>> {
    serde_json::from_str(src).map_err(|e| Error::from_json(e, src))
}

/// Loss curve: one row per logged iteration. `heldout_psnr` is filled on the
/// row after which an evaluation was taken.
pub fn emit_curve(history: &TrainHistory, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(["iteration", "total", "rgb_a", "rgb_b", "lfc", "lambda_t", "heldout_psnr"])
        .map_err(csv_err)?;
    for r in &history.records {
        let psnr = history
            .evals
            .iter()
            .find(|e| e.iteration == r.iteration + 1)
            .map(|e| e.psnr_mean.to_string())
            .unwrap_or_default();
        let l = &r.loss;
        w.write_record([
            r.iteration.to_string(),
            l.total.to_string(),
            l.rgb_a.to_string(),
            l.rgb_b.to_string(),
            l.lfc.to_string(),
            l.lambda_t.to_string(),
            psnr,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
