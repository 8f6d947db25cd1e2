//! Seeded repeat-run facility: the same model/data combination trained
//! under a sequence of seeds, summarized as per-step RMSE medians and
//! spreads.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::models::{Model, ModelConfig};
use crate::preprocess::scaler::quantile_sorted;
use crate::preprocess::{make_windows, Dataset, ScalerState, SplitPart};

use super::{train, TrainConfig};

/// Per-step RMSE of one seeded run, or the divergence that ended it.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityRun {
    pub seed: u64,
    pub rmse_per_step: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityReport {
    pub runs: Vec<StabilityRun>,
    pub median_per_step: Vec<f64>,
    /// Semi-interquartile range (Q75 - Q25) / 2 of the per-step RMSE
    /// across runs.
    pub deviation_per_step: Vec<f64>,
}

/// Trains one model per seed and summarizes the per-step test RMSE.
///
/// Divergent runs are recorded, flagged and excluded from the medians.
pub fn stability(
    scaled: &Dataset,
    scaler: &ScalerState,
    base_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    seeds: &[u64],
) -> Result<StabilityReport> {
    if seeds.len() < 2 {
        return Err(Error::InvalidArgument(
            "stability needs at least 2 runs".to_string(),
        ));
    }
    let pred_len = base_cfg.pred_len;

    let runs: Vec<StabilityRun> = seeds
        .par_iter()
        .map(|&seed| {
            let one = || -> Result<Vec<f64>> {
                let train_windows =
                    make_windows(scaled, SplitPart::Train, base_cfg.input_len, pred_len)?;
                let test_windows =
                    make_windows(scaled, SplitPart::Test, base_cfg.input_len, pred_len)?;
                let mut model_cfg = base_cfg.clone();
                model_cfg.seed = seed;
                let mut model = Model::build(model_cfg)?;
                let cfg = TrainConfig {
                    seed,
                    ..train_cfg.clone()
                };
                let outcome = train(&mut model, &train_windows, &cfg)?;
                let report = evaluate(&model, &test_windows, scaler, outcome.train_seconds)?;
                Ok(report.per_step.iter().map(|s| s.rmse).collect())
            };
            match one() {
                Ok(rmse_per_step) => StabilityRun {
                    seed,
                    rmse_per_step: Some(rmse_per_step),
                    error: None,
                },
                Err(e) if e.is_divergence() => StabilityRun {
                    seed,
                    rmse_per_step: None,
                    error: Some(e.to_string()),
                },
                Err(e) => StabilityRun {
                    seed,
                    rmse_per_step: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let valid: Vec<&Vec<f64>> = runs.iter().filter_map(|r| r.rmse_per_step.as_ref()).collect();
    if valid.is_empty() {
        return Err(Error::InvalidArgument(
            "every stability run failed; nothing to summarize".to_string(),
        ));
    }

    let mut median_per_step = Vec::with_capacity(pred_len);
    let mut deviation_per_step = Vec::with_capacity(pred_len);
    for step in 0..pred_len {
        let mut column: Vec<f64> = valid.iter().map(|r| r[step]).collect();
        column.sort_by(|a, b| a.partial_cmp(b).expect("finite rmse"));
        median_per_step.push(quantile_sorted(&column, 0.5));
        deviation_per_step
            .push((quantile_sorted(&column, 0.75) - quantile_sorted(&column, 0.25)) / 2.0);
    }

    Ok(StabilityReport {
        runs,
        median_per_step,
        deviation_per_step,
    })
}

/// Writes `stability_runs.csv` (long form: seed, step, rmse) and
/// `stability_summary.csv` (step, median, deviation).
pub fn write_stability(dir: &Path, report: &StabilityReport) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;

    let runs_path = dir.join("stability_runs.csv");
    let mut w = BufWriter::new(
        fs::File::create(&runs_path).map_err(|e| Error::io(runs_path.display().to_string(), e))?,
    );
    let io = |e| Error::io(runs_path.display().to_string(), e);
    writeln!(w, "seed,step,rmse,status").map_err(io)?;
    for run in &report.runs {
        match &run.rmse_per_step {
            Some(steps) => {
                for (i, rmse) in steps.iter().enumerate() {
                    writeln!(w, "{},{},{},ok", run.seed, i + 1, rmse).map_err(io)?;
                }
            }
            None => {
                writeln!(w, "{},,,failed", run.seed).map_err(io)?;
            }
        }
    }
    w.flush().map_err(io)?;

    let summary_path = dir.join("stability_summary.csv");
    let mut w = BufWriter::new(
        fs::File::create(&summary_path)
            .map_err(|e| Error::io(summary_path.display().to_string(), e))?,
    );
    let io = |e| Error::io(summary_path.display().to_string(), e);
    writeln!(w, "step,median_rmse,deviation").map_err(io)?;
    for (i, (m, d)) in report
        .median_per_step
        .iter()
        .zip(&report.deviation_per_step)
        .enumerate()
    {
        writeln!(w, "{},{},{}", i + 1, m, d).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
