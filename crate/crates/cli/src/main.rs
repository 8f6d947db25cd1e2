//! `flowcast`: generate synthetic city sensor data, preprocess it into
//! dataset variants, train and evaluate the recurrent forecasting models,
//! and report the results.
//!
//! Exit codes: 0 on success, 2 for usage/input errors, 3 when training or
//! inference diverges numerically.

mod manifest;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use flowcast_core::datagen::{generate, CityConfig};
use flowcast_core::eval::{
    correlation, correlation_heatmap_svg, evaluate, per_step_rmse_svg, persistence_report,
    read_correlation, read_report, write_correlation, write_report,
};
use flowcast_core::models::{Architecture, Model, ModelConfig};
use flowcast_core::layers::CellKind;
use flowcast_core::preprocess::{
    build_aggregated, build_raw, build_repaired, drop_unusable, fit_scaler, ingest_csv,
    load_dataset, make_windows, resample, save_dataset, Dataset, ScalerState, SplitPart, Variant,
};
use flowcast_core::seed::subseed;
use flowcast_core::train::{
    run_grid, stability, train, write_stability, GridSpec, ModelSizes, TrainConfig,
};
use flowcast_core::{Error, Result};

use manifest::RunManifest;

#[derive(Parser)]
#[command(
    name = "flowcast",
    version,
    about = "Traffic-flow forecasting: data generation, preprocessing, training, evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic city sensor CSVs.
    Generate {
        /// City configuration (JSON); defaults describe a 12-intersection city.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed from the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build one dataset variant from measurement CSVs.
    Preprocess {
        /// Directory holding measurements.csv and metadata.csv.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        variant: Variant,
        /// Resampling step in minutes (1, 5, 15, 30 or 60).
        #[arg(long)]
        step: u32,
        #[arg(long)]
        out: PathBuf,
        /// Minimum usable (non-missing, non-zero) coverage per sensor.
        #[arg(long, default_value_t = 0.5)]
        min_coverage: f64,
    },
    /// Train one model on a prepared dataset archive.
    Train {
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        /// Training configuration (JSON, TrainConfig fields).
        #[arg(long)]
        train_cfg: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained model on the test range of a dataset archive.
    Evaluate {
        /// Directory holding model.json and params.bin.
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run an experiment grid over prepared dataset archives.
    Grid {
        /// Grid specification (JSON, GridSpec fields).
        #[arg(long)]
        spec: PathBuf,
        /// Directory holding `<variant>_<step>min` dataset archives.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train the same combination repeatedly under consecutive seeds.
    Stability {
        #[arg(long)]
        runs: usize,
        #[arg(long)]
        dataset: PathBuf,
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        train_cfg: Option<PathBuf>,
        /// Base seed; runs use seed, seed+1, ...
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the channel correlation matrix of a dataset archive.
    Correlate {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize a run directory; optionally emit SVG plots.
    Report {
        /// Directory holding report.json (and correlation.csv for the heatmap).
        #[arg(long)]
        run: PathBuf,
        /// Write rmse_per_step.svg and correlation.svg next to the inputs.
        #[arg(long, default_value_t = false)]
        svg: bool,
    },
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long)]
    arch: Architecture,
    #[arg(long)]
    cell: CellKind,
    /// Prediction length in steps.
    #[arg(long)]
    pred: usize,
    /// Input length in steps.
    #[arg(long)]
    input: usize,
    /// Model size overrides (JSON, ModelSizes fields).
    #[arg(long)]
    model_cfg: Option<PathBuf>,
}

impl ModelArgs {
    fn build_config(&self, channels: usize, seed: u64) -> Result<ModelConfig> {
        let mut cfg = ModelConfig::new(self.arch, self.cell, channels, self.input, self.pred);
        if let Some(path) = &self.model_cfg {
            let sizes = read_json::<ModelSizes>(path)?;
            cfg.conv_filters1 = sizes.conv_filters1;
            cfg.conv_filters2 = sizes.conv_filters2;
            cfg.kernel = sizes.kernel;
            cfg.pool = sizes.pool;
            cfg.units = sizes.units;
            cfg.dense_units = sizes.dense_units;
            cfg.dropout = sizes.dropout;
        }
        cfg.seed = seed;
        Ok(cfg)
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let json = fs::read_to_string(path).map_err(|_| Error::MissingInput(path.to_path_buf()))?;
    serde_json::from_str(&json).map_err(|e| Error::Json {
        path: path.display().to_string(),
        source: e,
    })
}

fn load_scaled(dir: &Path) -> Result<(Dataset, Dataset, ScalerState)> {
    let (ds, scaler) = load_dataset(dir)?;
    let scaled = scaler.transform(&ds)?;
    Ok((ds, scaled, scaler))
}

fn load_train_cfg(path: Option<&PathBuf>) -> Result<TrainConfig> {
    match path {
        Some(p) => read_json::<TrainConfig>(p),
        None => Ok(TrainConfig::default()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_divergence() {
                ExitCode::from(3)
            } else {
                ExitCode::from(2)
            }
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Generate { config, out, seed } => cmd_generate(config, out, seed),
        Command::Preprocess {
            data,
            variant,
            step,
            out,
            min_coverage,
        } => cmd_preprocess(data, variant, step, out, min_coverage),
        Command::Train {
            dataset,
            model,
            train_cfg,
            seed,
            out,
        } => cmd_train(dataset, model, train_cfg, seed, out),
        Command::Evaluate {
            model,
            dataset,
            out,
        } => cmd_evaluate(model, dataset, out),
        Command::Grid {
            spec,
            data,
            out,
            workers,
        } => cmd_grid(spec, data, out, workers),
        Command::Stability {
            runs,
            dataset,
            model,
            train_cfg,
            seed,
            out,
        } => cmd_stability(runs, dataset, model, train_cfg, seed, out),
        Command::Correlate { dataset, out } => cmd_correlate(dataset, out),
        Command::Report { run, svg } => cmd_report(run, svg),
    }
}

fn cmd_generate(config: Option<PathBuf>, out: PathBuf, seed: Option<u64>) -> Result<()> {
    let manifest = RunManifest::begin("generate").config(config.as_deref());
    let mut cfg = match &config {
        Some(path) => CityConfig::from_file(path)?,
        None => CityConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let summary = generate(&cfg, &out)?;
    println!(
        "generated {} rows for {} sensors ({} dead) at {} intersections over {} days",
        summary.rows, summary.sensors, summary.dead_sensors, summary.intersections, summary.days
    );
    manifest
        .seed(cfg.seed)
        .output("measurements.csv")
        .output("metadata.csv")
        .write(&out)
}

fn cmd_preprocess(
    data: PathBuf,
    variant: Variant,
    step: u32,
    out: PathBuf,
    min_coverage: f64,
) -> Result<()> {
    let measurements = data.join("measurements.csv");
    let metadata = data.join("metadata.csv");
    let manifest = RunManifest::begin("preprocess")
        .input(&measurements)
        .input(&metadata);

    let set = ingest_csv(&measurements, &metadata)?;
    let set = drop_unusable(set, min_coverage)?;
    let metas: Vec<_> = set.series.iter().map(|s| s.meta).collect();
    let ds = match variant {
        Variant::Raw => build_raw(&set),
        Variant::Repaired => build_repaired(&set)?,
        Variant::Aggregated => build_aggregated(&build_repaired(&set)?, &metas)?,
    };
    let ds = resample(&ds, step)?.split()?;
    let scaler = fit_scaler(&ds)?;
    save_dataset(&ds, &scaler, &out)?;
    println!(
        "{} dataset at {} min: {} rows x {} channels (train/val/test {:?})",
        ds.variant,
        ds.step_min,
        ds.n_rows(),
        ds.n_channels(),
        ds.split.as_ref().map(|s| (s.train.1, s.val.1 - s.val.0, s.test.1 - s.test.0))
    );
    manifest
        .output("values.csv")
        .output("calendar.csv")
        .output("channels.csv")
        .output("scaler.json")
        .output("split.json")
        .write(&out)
}

fn cmd_train(
    dataset: PathBuf,
    model_args: ModelArgs,
    train_cfg: Option<PathBuf>,
    seed: u64,
    out: PathBuf,
) -> Result<()> {
    let manifest = RunManifest::begin("train")
        .input(&dataset)
        .config(train_cfg.as_deref())
        .seed(seed);
    let (_ds, scaled, scaler) = load_scaled(&dataset)?;
    let windows = make_windows(&scaled, SplitPart::Train, model_args.input, model_args.pred)?;

    let model_cfg = model_args.build_config(scaled.n_channels(), subseed(seed, "init"))?;
    let mut model = Model::build(model_cfg)?;
    let cfg = TrainConfig {
        seed: subseed(seed, "train"),
        ..load_train_cfg(train_cfg.as_ref())?
    };
    let outcome = train(&mut model, &windows, &cfg)?;
    model.save(&out)?;

    let history_path = out.join("loss_history.csv");
    let mut history = String::from("epoch,loss\n");
    for (i, loss) in outcome.epoch_losses.iter().enumerate() {
        history.push_str(&format!("{},{}\n", i + 1, loss));
    }
    fs::write(&history_path, history)
        .map_err(|e| Error::io(history_path.display().to_string(), e))?;

    // Quick validation-range check, mirroring the protocol's held-out split.
    if let Ok(val_windows) = make_windows(&scaled, SplitPart::Val, model_args.input, model_args.pred)
    {
        let val = evaluate(&model, &val_windows, &scaler, outcome.train_seconds)?;
        println!("validation rmse {:.3} veh/h, r2 {:.4}", val.rmse, val.r2);
    }
    println!(
        "trained {} {} for {} steps in {:.1}s ({} weights), final loss {:.6}",
        model.config().architecture,
        model.config().cell,
        outcome.steps,
        outcome.train_seconds,
        model.param_count(),
        outcome.epoch_losses.last().copied().unwrap_or(f64::NAN)
    );
    manifest
        .output("model.json")
        .output("params.bin")
        .output("loss_history.csv")
        .write(&out)
}

fn cmd_evaluate(model_dir: PathBuf, dataset: PathBuf, out: PathBuf) -> Result<()> {
    let manifest = RunManifest::begin("evaluate")
        .input(&model_dir)
        .input(&dataset);
    let (_ds, scaled, scaler) = load_scaled(&dataset)?;
    let model = Model::load(&model_dir)?;
    let cfg = model.config();
    if cfg.channels != scaled.n_channels() {
        return Err(Error::InvalidArgument(format!(
            "model was built for {} channels, dataset has {}",
            cfg.channels,
            scaled.n_channels()
        )));
    }
    let windows = make_windows(&scaled, SplitPart::Test, cfg.input_len, cfg.pred_len)?;
    let report = evaluate(&model, &windows, &scaler, 0.0)?;
    let baseline = persistence_report(&windows, &scaler)?;
    write_report(&out, &report)?;
    println!(
        "test rmse {:.3} veh/h (persistence baseline {:.3}), r2 {:.4}, inference {:.3} ms",
        report.rmse, baseline.rmse, report.r2, report.infer_ms
    );
    manifest
        .output("report.json")
        .output("per_step.csv")
        .output("per_channel.csv")
        .write(&out)
}

fn cmd_grid(spec_path: PathBuf, data: PathBuf, out: PathBuf, workers: usize) -> Result<()> {
    let manifest = RunManifest::begin("grid")
        .config(Some(spec_path.as_path()))
        .input(&data);
    let spec = GridSpec::from_file(&spec_path)?;
    let n_runs = spec.enumerate_runs().len();
    println!("running {n_runs} grid combinations with {workers} worker(s)");
    let outcome = run_grid(&spec, &data, &out, workers)?;
    println!(
        "grid finished: {} succeeded, {} failed",
        outcome.results.len(),
        outcome.failures.len()
    );
    for (label, error) in &outcome.failures {
        eprintln!("failed {label}: {error}");
    }
    manifest.output("results.csv").write(&out)
}

fn cmd_stability(
    runs: usize,
    dataset: PathBuf,
    model_args: ModelArgs,
    train_cfg: Option<PathBuf>,
    seed: u64,
    out: PathBuf,
) -> Result<()> {
    let manifest = RunManifest::begin("stability").input(&dataset).seed(seed);
    let (_ds, scaled, scaler) = load_scaled(&dataset)?;
    let base_cfg = model_args.build_config(scaled.n_channels(), seed)?;
    let cfg = load_train_cfg(train_cfg.as_ref())?;
    let seeds: Vec<u64> = (0..runs as u64).map(|i| seed + i).collect();
    let report = stability(&scaled, &scaler, &base_cfg, &cfg, &seeds)?;
    write_stability(&out, &report)?;
    println!("per-step median rmse: {:?}", report.median_per_step);
    println!("per-step deviation:   {:?}", report.deviation_per_step);
    manifest
        .output("stability_runs.csv")
        .output("stability_summary.csv")
        .write(&out)
}

fn cmd_correlate(dataset: PathBuf, out: PathBuf) -> Result<()> {
    let manifest = RunManifest::begin("correlate").input(&dataset);
    let (ds, _scaler) = load_dataset(&dataset)?;
    let corr = correlation(&ds.values)?;
    write_correlation(&out, &corr, &ds.channel_ids)?;
    println!(
        "correlation matrix for {} channels written to {}",
        ds.n_channels(),
        out.join("correlation.csv").display()
    );
    manifest.output("correlation.csv").write(&out)
}

fn cmd_report(run: PathBuf, svg: bool) -> Result<()> {
    let manifest = RunManifest::begin("report").input(&run);
    let report = read_report(&run)?;
    println!(
        "rmse {:.3} veh/h | r2 {:.4} | {} weights | train {:.1}s | inference {:.3} ms",
        report.rmse, report.r2, report.n_weights, report.train_seconds, report.infer_ms
    );
    println!("step  rmse      r2");
    for s in &report.per_step {
        println!("{:>4}  {:<8.3} {:.4}", s.step, s.rmse, s.r2);
    }
    let mut outputs = Vec::new();
    if svg {
        let curve = per_step_rmse_svg(&report.per_step);
        let curve_path = run.join("rmse_per_step.svg");
        fs::write(&curve_path, curve).map_err(|e| Error::io(curve_path.display().to_string(), e))?;
        outputs.push("rmse_per_step.svg");
        match read_correlation(&run) {
            Ok((corr, labels)) => {
                let heat = correlation_heatmap_svg(&corr, &labels);
                let heat_path = run.join("correlation.svg");
                fs::write(&heat_path, heat)
                    .map_err(|e| Error::io(heat_path.display().to_string(), e))?;
                outputs.push("correlation.svg");
            }
            Err(Error::MissingInput(_)) => {
                println!("no correlation.csv in {}; skipping heatmap", run.display());
            }
            Err(e) => return Err(e),
        }
    }
    let mut manifest = manifest;
    for o in outputs {
        manifest = manifest.output(o);
    }
    manifest.write(&run)
}
