//! The experiment grid: every requested combination of dataset variant,
//! step size, prediction length and model variant is trained and evaluated
//! from prepared dataset archives, one result row per run.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, write_report};
use crate::layers::CellKind;
use crate::models::{all_variants, Architecture, Model, ModelConfig};
use crate::preprocess::{load_dataset, make_windows, SplitPart, Variant};
use crate::seed::subseed;

use super::{train, TrainConfig};

/// One of the six architecture x cell combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelId {
    pub architecture: Architecture,
    pub cell: CellKind,
}

/// Model sizes shared by every run of a grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSizes {
    pub conv_filters1: usize,
    pub conv_filters2: usize,
    pub kernel: usize,
    pub pool: usize,
    pub units: usize,
    pub dense_units: usize,
    pub dropout: f64,
}

impl Default for ModelSizes {
    fn default() -> Self {
        let d = ModelConfig::new(Architecture::VectorOutput, CellKind::Gru, 1, 1, 1);
        ModelSizes {
            conv_filters1: d.conv_filters1,
            conv_filters2: d.conv_filters2,
            kernel: d.kernel,
            pool: d.pool,
            units: d.units,
            dense_units: d.dense_units,
            dropout: d.dropout,
        }
    }
}

impl ModelSizes {
    fn apply(&self, cfg: &mut ModelConfig) {
        cfg.conv_filters1 = self.conv_filters1;
        cfg.conv_filters2 = self.conv_filters2;
        cfg.kernel = self.kernel;
        cfg.pool = self.pool;
        cfg.units = self.units;
        cfg.dense_units = self.dense_units;
        cfg.dropout = self.dropout;
    }
}

/// Grid definition. The defaults reproduce the full protocol: 3 variants x
/// 5 step sizes x 3 prediction lengths x 6 models = 270 runs with input
/// length 200.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct GridSpec {
    pub variants: Vec<Variant>,
    pub step_sizes: Vec<u32>,
    pub pred_lengths: Vec<usize>,
    pub models: Vec<ModelId>,
    pub input_len: usize,
    /// Use input length 50 for the (repaired, 5 min, P=5) reference
    /// combination.
    pub fine_tune_reference: bool,
    pub sizes: ModelSizes,
    pub train: TrainConfig,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            variants: vec![Variant::Raw, Variant::Repaired, Variant::Aggregated],
            step_sizes: vec![1, 5, 15, 30, 60],
            pred_lengths: vec![1, 5, 20],
            models: all_variants()
                .iter()
                .map(|&(architecture, cell)| ModelId { architecture, cell })
                .collect(),
            input_len: 200,
            fine_tune_reference: false,
            sizes: ModelSizes::default(),
            train: TrainConfig::default(),
        }
    }
}

impl GridSpec {
    pub fn from_file(path: &Path) -> Result<GridSpec> {
        let json = fs::read_to_string(path).map_err(|_| Error::MissingInput(path.to_path_buf()))?;
        serde_json::from_str(&json).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })
    }

    /// Input length rule: 200 in general, shortened to 100 for the
    /// (60 min, P=20) combination that lacks data for longer inputs, and
    /// 50 for the fine-tuning reference combination when flagged.
    fn input_len_for(&self, variant: Variant, step_min: u32, pred_len: usize) -> usize {
        if step_min == 60 && pred_len == 20 {
            self.input_len.min(100)
        } else if self.fine_tune_reference
            && variant == Variant::Repaired
            && step_min == 5
            && pred_len == 5
        {
            50
        } else {
            self.input_len
        }
    }

    /// Every run of the grid, in deterministic order.
    pub fn enumerate_runs(&self) -> Vec<RunPlan> {
        let mut plans = Vec::new();
        for &variant in &self.variants {
            for &step_min in &self.step_sizes {
                for &pred_len in &self.pred_lengths {
                    for model in &self.models {
                        plans.push(RunPlan {
                            variant,
                            step_min,
                            pred_len,
                            architecture: model.architecture,
                            cell: model.cell,
                            input_len: self.input_len_for(variant, step_min, pred_len),
                        });
                    }
                }
            }
        }
        plans
    }
}

/// One planned training/evaluation run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunPlan {
    pub variant: Variant,
    pub step_min: u32,
    pub pred_len: usize,
    pub architecture: Architecture,
    pub cell: CellKind,
    pub input_len: usize,
}

impl RunPlan {
    pub fn label(&self) -> String {
        format!(
            "{}_{}min_p{}_{}_{}",
            self.variant, self.step_min, self.pred_len, self.architecture, self.cell
        )
    }

    /// Archive directory name the run reads its dataset from.
    pub fn archive_name(&self) -> String {
        format!("{}_{}min", self.variant, self.step_min)
    }
}

/// One row of `results.csv`.
#[derive(Debug, Clone, Serialize)]
pub struct RunResult {
    pub variant: Variant,
    pub step_min: u32,
    pub pred_len: usize,
    pub architecture: Architecture,
    pub cell: CellKind,
    pub input_len: usize,
    pub rmse: f64,
    pub r2: f64,
    pub train_seconds: f64,
    pub infer_ms: f64,
    pub n_weights: usize,
}

#[derive(Debug, Clone)]
pub struct GridOutcome {
    pub results: Vec<RunResult>,
    /// (run label, error) pairs for runs that could not complete.
    pub failures: Vec<(String, String)>,
}

fn execute_run(plan: &RunPlan, spec: &GridSpec, data_dir: &Path, out_dir: &Path) -> Result<RunResult> {
    let archive = data_dir.join(plan.archive_name());
    let (ds, scaler) = load_dataset(&archive)?;
    let scaled = scaler.transform(&ds)?;
    let train_windows = make_windows(&scaled, SplitPart::Train, plan.input_len, plan.pred_len)?;

    let label = plan.label();
    let run_seed = subseed(spec.train.seed, &label);
    let mut model_cfg = ModelConfig::new(
        plan.architecture,
        plan.cell,
        ds.n_channels(),
        plan.input_len,
        plan.pred_len,
    );
    spec.sizes.apply(&mut model_cfg);
    model_cfg.seed = run_seed;
    let mut model = Model::build(model_cfg)?;

    let train_cfg = TrainConfig {
        seed: run_seed,
        ..spec.train.clone()
    };
    let outcome = train(&mut model, &train_windows, &train_cfg)?;

    let test_windows = make_windows(&scaled, SplitPart::Test, plan.input_len, plan.pred_len)?;
    let report = evaluate(&model, &test_windows, &scaler, outcome.train_seconds)?;

    let run_dir = out_dir.join(&label);
    write_report(&run_dir, &report)?;
    let history_path = run_dir.join("loss_history.csv");
    let mut w = BufWriter::new(
        fs::File::create(&history_path)
            .map_err(|e| Error::io(history_path.display().to_string(), e))?,
    );
    writeln!(w, "epoch,loss").map_err(|e| Error::io(history_path.display().to_string(), e))?;
    for (i, loss) in outcome.epoch_losses.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, loss)
            .map_err(|e| Error::io(history_path.display().to_string(), e))?;
    }
    w.flush()
        .map_err(|e| Error::io(history_path.display().to_string(), e))?;

    Ok(RunResult {
        variant: plan.variant,
        step_min: plan.step_min,
        pred_len: plan.pred_len,
        architecture: plan.architecture,
        cell: plan.cell,
        input_len: plan.input_len,
        rmse: report.rmse,
        r2: report.r2,
        train_seconds: report.train_seconds,
        infer_ms: report.infer_ms,
        n_weights: report.n_weights,
    })
}

/// Runs the whole grid with a bounded worker pool. Failed runs (missing
/// archives, divergence, too little data) are recorded and the grid
/// continues; `results.csv` and `failures.csv` land in `out_dir`.
pub fn run_grid(
    spec: &GridSpec,
    data_dir: &Path,
    out_dir: &Path,
    workers: usize,
) -> Result<GridOutcome> {
    spec.train.validate()?;
    let plans = spec.enumerate_runs();
    if plans.is_empty() {
        return Err(Error::InvalidArgument("grid spec enumerates no runs".to_string()));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("cannot build worker pool: {e}")))?;
    let run_outcomes: Vec<std::result::Result<RunResult, (String, String)>> = pool.install(|| {
        plans
            .par_iter()
            .map(|plan| {
                execute_run(plan, spec, data_dir, out_dir)
                    .map_err(|e| (plan.label(), e.to_string()))
            })
            .collect()
    });

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for outcome in run_outcomes {
        match outcome {
            Ok(r) => results.push(r),
            Err(f) => failures.push(f),
        }
    }

    write_results_csv(&out_dir.join("results.csv"), &results)?;
    if !failures.is_empty() {
        let path = out_dir.join("failures.csv");
        let mut w = BufWriter::new(
            fs::File::create(&path).map_err(|e| Error::io(path.display().to_string(), e))?,
        );
        writeln!(w, "run,error").map_err(|e| Error::io(path.display().to_string(), e))?;
        for (label, error) in &failures {
            writeln!(w, "{label},\"{}\"", error.replace('"', "'"))
                .map_err(|e| Error::io(path.display().to_string(), e))?;
        }
        w.flush().map_err(|e| Error::io(path.display().to_string(), e))?;
    }

    Ok(GridOutcome { results, failures })
}

fn write_results_csv(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut w = BufWriter::new(
        fs::File::create(path).map_err(|e| Error::io(path.display().to_string(), e))?,
    );
    let io = |e| Error::io(path.display().to_string(), e);
    writeln!(
        w,
        "variant,step_min,pred_len,architecture,cell,input_len,rmse,r2,train_seconds,infer_ms,n_weights"
    )
    .map_err(io)?;
    for r in results {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.variant,
            r.step_min,
            r.pred_len,
            r.architecture,
            r.cell,
            r.input_len,
            r.rmse,
            r.r2,
            r.train_seconds,
            r.infer_ms,
            r.n_weights
        )
        .map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}
