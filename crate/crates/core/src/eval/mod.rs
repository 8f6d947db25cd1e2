//! Test-set metrics and analyses: RMSE and R² totals, per-step and
//! per-channel breakdowns, the persistence baseline, sensor correlation
//! matrices, and timing/weight accounting.

mod report;
mod svg;

pub use report::{read_correlation, read_report, write_correlation, write_report};
pub use svg::{correlation_heatmap_svg, per_step_rmse_svg};

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Model;
use crate::preprocess::{ScalerState, Variant, WindowBatch, WindowSet, MISSING_MARKER};
use crate::tensor::Tensor;

/// Root mean squared error over all elements of two equal-shaped tensors.
pub fn rmse(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "rmse",
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    if pred.is_empty() {
        return Err(Error::InvalidArgument("rmse of empty input".to_string()));
    }
    let mut acc = Acc::default();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        acc.add(p, t);
    }
    acc.rmse()
}

/// Coefficient of determination, pooled over all elements. May be
/// negative; a constant target has no variance to explain and is an error.
pub fn r2(pred: &Tensor, target: &Tensor) -> Result<f64> {
    if pred.shape() != target.shape() {
        return Err(Error::ShapeMismatch {
            op: "r2",
            lhs: pred.shape().to_vec(),
            rhs: target.shape().to_vec(),
        });
    }
    let mut acc = Acc::default();
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        acc.add(p, t);
    }
    acc.r2()
}

/// Streaming accumulator for squared error and target variance.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    sq_err: f64,
    sum_t: f64,
    sum_t2: f64,
    n: u64,
}

impl Acc {
    fn add(&mut self, pred: f64, target: f64) {
        let e = pred - target;
        self.sq_err += e * e;
        self.sum_t += target;
        self.sum_t2 += target * target;
        self.n += 1;
    }

    fn merge(&mut self, other: &Acc) {
        self.sq_err += other.sq_err;
        self.sum_t += other.sum_t;
        self.sum_t2 += other.sum_t2;
        self.n += other.n;
    }

    fn rmse(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::InvalidArgument(
                "no elements to score (all masked?)".to_string(),
            ));
        }
        Ok((self.sq_err / self.n as f64).sqrt())
    }

    fn r2(&self) -> Result<f64> {
        if self.n == 0 {
            return Err(Error::InvalidArgument(
                "no elements to score (all masked?)".to_string(),
            ));
        }
        let n = self.n as f64;
        let ss_tot = self.sum_t2 - self.sum_t * self.sum_t / n;
        if ss_tot <= 1e-12 * self.sum_t2.max(1.0) {
            return Err(Error::InvalidArgument(
                "target has no variance; R2 is undefined".to_string(),
            ));
        }
        Ok(1.0 - self.sq_err / ss_tot)
    }
}

/// Per-prediction-step metric row.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepMetric {
    /// 1-based prediction step.
    pub step: usize,
    pub rmse: f64,
    pub r2: f64,
}

/// Per-channel RMSE across all prediction steps.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelMetric {
    pub channel: String,
    pub rmse: f64,
}

/// Everything one evaluation run reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Total RMSE in veh/h over all windows, steps and channels.
    pub rmse: f64,
    pub r2: f64,
    pub per_step: Vec<StepMetric>,
    pub per_channel: Vec<ChannelMetric>,
    pub n_weights: usize,
    pub train_seconds: f64,
    /// Mean single-window forward time in eval mode, milliseconds.
    pub infer_ms: f64,
}

struct Partial {
    total: Acc,
    per_step: Vec<Acc>,
    per_channel: Vec<Acc>,
}

impl Partial {
    fn new(p: usize, c: usize) -> Self {
        Partial {
            total: Acc::default(),
            per_step: vec![Acc::default(); p],
            per_channel: vec![Acc::default(); c],
        }
    }

    /// Folds one window's scaled prediction/target pair in, converting to
    /// veh/h. Raw-variant `-1` target markers are excluded everywhere.
    fn accumulate(
        &mut self,
        pred_scaled: &Tensor,
        target_scaled: &Tensor,
        scaler: &ScalerState,
        mask_markers: bool,
    ) {
        let p = self.per_step.len();
        let c = self.per_channel.len();
        for step in 0..p {
            for ch in 0..c {
                let pred = scaler.inverse_value(ch, pred_scaled.at(step, ch));
                let target = scaler.inverse_value(ch, target_scaled.at(step, ch));
                if mask_markers && (target - MISSING_MARKER).abs() < 1e-6 {
                    continue;
                }
                self.total.add(pred, target);
                self.per_step[step].add(pred, target);
                self.per_channel[ch].add(pred, target);
            }
        }
    }

    fn merge(&mut self, other: &Partial) {
        self.total.merge(&other.total);
        for (a, b) in self.per_step.iter_mut().zip(&other.per_step) {
            a.merge(b);
        }
        for (a, b) in self.per_channel.iter_mut().zip(&other.per_channel) {
            a.merge(b);
        }
    }

    fn into_report(
        self,
        channel_ids: &[String],
        n_weights: usize,
        train_seconds: f64,
        infer_ms: f64,
    ) -> Result<EvalReport> {
        let per_step = self
            .per_step
            .iter()
            .enumerate()
            .map(|(i, acc)| {
                Ok(StepMetric {
                    step: i + 1,
                    rmse: acc.rmse()?,
                    r2: acc.r2()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let per_channel = self
            .per_channel
            .iter()
            .zip(channel_ids)
            .map(|(acc, id)| {
                Ok(ChannelMetric {
                    channel: id.clone(),
                    rmse: acc.rmse()?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EvalReport {
            rmse: self.total.rmse()?,
            r2: self.total.r2()?,
            per_step,
            per_channel,
            n_weights,
            train_seconds,
            infer_ms,
        })
    }
}

const EVAL_CHUNK: usize = 64;

/// Evaluates a trained model over a window set.
///
/// Predictions and targets are inverse-transformed to veh/h before any
/// error is computed. In the raw variant, target elements equal to the
/// `-1` marker are excluded from every sum. Window chunks run in parallel
/// but are merged in a fixed order, so results are reproducible.
pub fn evaluate(
    model: &Model,
    windows: &WindowSet<'_>,
    scaler: &ScalerState,
    train_seconds: f64,
) -> Result<EvalReport> {
    let count = windows.count();
    if count == 0 {
        return Err(Error::InvalidArgument("no windows to evaluate".to_string()));
    }
    let p = windows.pred_len();
    let c = windows.channels();
    let mask = windows.variant() == Variant::Raw;

    let chunks: Vec<(usize, usize)> = (0..count)
        .step_by(EVAL_CHUNK)
        .map(|lo| (lo, (lo + EVAL_CHUNK).min(count)))
        .collect();
    let partials: Vec<Result<Partial>> = chunks
        .par_iter()
        .map(|&(lo, hi)| {
            let mut local = model.clone();
            let mut part = Partial::new(p, c);
            for k in lo..hi {
                let batch = windows.window(k);
                let pred = local.forward_eval(&batch.input)?;
                part.accumulate(&pred, &batch.target, scaler, mask);
            }
            Ok(part)
        })
        .collect();

    let mut total = Partial::new(p, c);
    for part in partials {
        total.merge(&part?);
    }

    let infer_ms = measure_inference_ms(model, windows)?;
    total.into_report(
        windows.channel_ids(),
        model.param_count(),
        train_seconds,
        infer_ms,
    )
}

/// Mean eval-mode forward time over at least 100 passes.
fn measure_inference_ms(model: &Model, windows: &WindowSet<'_>) -> Result<f64> {
    let n_cached = windows.count().min(8);
    let cached: Vec<WindowBatch> = (0..n_cached).map(|k| windows.window(k)).collect();
    let mut local = model.clone();
    // Warm-up pass keeps one-time allocation out of the measurement.
    local.forward_eval(&cached[0].input)?;
    let reps = 100;
    let started = Instant::now();
    for i in 0..reps {
        local.forward_eval(&cached[i % n_cached].input)?;
    }
    Ok(started.elapsed().as_secs_f64() * 1000.0 / reps as f64)
}

/// Persistence baseline: every forecast step repeats the last observed
/// input row. The floor any trained model has to beat.
pub fn persistence_report(windows: &WindowSet<'_>, scaler: &ScalerState) -> Result<EvalReport> {
    let count = windows.count();
    if count == 0 {
        return Err(Error::InvalidArgument("no windows to evaluate".to_string()));
    }
    let p = windows.pred_len();
    let c = windows.channels();
    let mask = windows.variant() == Variant::Raw;

    let mut part = Partial::new(p, c);
    for k in 0..count {
        let batch = windows.window(k);
        let last = batch.input.row(windows.input_len() - 1);
        let mut pred = Vec::with_capacity(p * c);
        for _ in 0..p {
            pred.extend_from_slice(&last[..c]);
        }
        let pred = Tensor::new(vec![p, c], pred)?;
        part.accumulate(&pred, &batch.target, scaler, mask);
    }
    part.into_report(windows.channel_ids(), 0, 0.0, 0.0)
}

/// Pearson correlation matrix between all channel pairs.
///
/// Constant channels correlate 0 with everything and 1 with themselves.
pub fn correlation(values: &Tensor) -> Result<Tensor> {
    if values.rank() != 2 || values.rows() < 2 {
        return Err(Error::InvalidArgument(
            "correlation needs a [rows x channels] matrix with at least 2 rows".to_string(),
        ));
    }
    let (rows, c) = (values.rows(), values.cols());
    let n = rows as f64;

    let mut mean = vec![0.0; c];
    for r in 0..rows {
        for (m, &v) in mean.iter_mut().zip(values.row(r)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }

    // Centered cross products.
    let mut cov = vec![0.0; c * c];
    for r in 0..rows {
        let row = values.row(r);
        for i in 0..c {
            let di = row[i] - mean[i];
            for j in i..c {
                cov[i * c + j] += di * (row[j] - mean[j]);
            }
        }
    }
    let mut out = vec![0.0; c * c];
    for i in 0..c {
        out[i * c + i] = 1.0;
        let var_i = cov[i * c + i];
        for j in i + 1..c {
            let var_j = cov[j * c + j];
            let denom = (var_i * var_j).sqrt();
            let r = if denom > 0.0 { cov[i * c + j] / denom } else { 0.0 };
            // Guard against rounding pushing |r| past 1.
            let r = r.clamp(-1.0, 1.0);
            out[i * c + j] = r;
            out[j * c + i] = r;
        }
    }
    Tensor::matrix(c, c, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::train::mse_loss;

    #[test]
    fn rmse_examples() {
        let t = Tensor::vector(vec![0.0, 0.0, 0.0]);
        let p = Tensor::vector(vec![1.0, 2.0, 2.0]);
        assert!((rmse(&p, &t).unwrap() - 3.0_f64.sqrt()).abs() < 1e-12);
        assert_eq!(rmse(&t, &t).unwrap(), 0.0);

        // Scaling all errors by c scales RMSE by |c|.
        let p2 = Tensor::vector(vec![-3.0, -6.0, -6.0]);
        assert!((rmse(&p2, &t).unwrap() - 3.0 * rmse(&p, &t).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn rmse_squared_equals_mse() {
        let p = Tensor::vector(vec![1.0, 2.5, -3.0, 0.7]);
        let t = Tensor::vector(vec![0.3, 2.0, -1.0, 1.9]);
        let r = rmse(&p, &t).unwrap();
        let (m, _) = mse_loss(&p, &t).unwrap();
        assert!((r * r - m).abs() < 1e-9);
    }

    #[test]
    fn r2_examples() {
        let t = Tensor::vector(vec![1.0, 2.0, 3.0]);
        assert!((r2(&t, &t).unwrap() - 1.0).abs() < 1e-12);

        // Predicting the mean everywhere gives exactly zero.
        let mean = Tensor::vector(vec![2.0, 2.0, 2.0]);
        assert!(r2(&mean, &t).unwrap().abs() < 1e-12);

        let p = Tensor::vector(vec![1.0, 2.0, 2.0]);
        assert!((r2(&p, &t).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn r2_rejects_constant_target() {
        let t = Tensor::vector(vec![5.0; 4]);
        let p = Tensor::vector(vec![1.0, 2.0, 3.0, 4.0]);
        assert!(r2(&p, &t).is_err());
    }

    #[test]
    fn shift_invariance() {
        let p = Tensor::vector(vec![1.0, 2.0, 4.0, 8.0]);
        let t = Tensor::vector(vec![0.0, 3.0, 3.5, 9.0]);
        let shift = 123.0;
        let ps = p.map(|v| v + shift);
        let ts = t.map(|v| v + shift);
        assert!((rmse(&p, &t).unwrap() - rmse(&ps, &ts).unwrap()).abs() < 1e-9);
        assert!((r2(&p, &t).unwrap() - r2(&ps, &ts).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn correlation_properties() {
        let rows = 50;
        let mut values = Vec::with_capacity(rows * 3);
        for i in 0..rows {
            let x = (i as f64 * 0.37).sin();
            values.push(x);
            values.push(-x);
            values.push(7.0); // constant channel
        }
        let m = Tensor::matrix(rows, 3, values).unwrap();
        let corr = correlation(&m).unwrap();
        assert_eq!(corr.at(0, 0), 1.0);
        assert_eq!(corr.at(2, 2), 1.0);
        assert!((corr.at(0, 1) + 1.0).abs() < 1e-12);
        assert_eq!(corr.at(0, 2), 0.0);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(corr.at(i, j), corr.at(j, i));
                assert!(corr.at(i, j).abs() <= 1.0);
            }
        }
    }
}
