//! Loss, optimizer, the sequential-order training loop, the experiment
//! grid runner and the seeded stability facility.

mod adam;
mod grid;
mod loss;
mod stability;

pub use adam::{adam_update, Adam, AdamParams};
pub use grid::{run_grid, GridOutcome, GridSpec, ModelId, ModelSizes, RunPlan, RunResult};
pub use loss::mse_loss;
pub use stability::{stability, write_stability, StabilityReport, StabilityRun};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layers::Mode;
use crate::models::Model;
use crate::preprocess::WindowSet;

/// Training protocol configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 regularization coefficient applied to weight matrices.
    pub l2: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            steps_per_epoch: 200,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            l2: 1e-5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 1 || self.steps_per_epoch < 1 || self.batch_size < 1 {
            return Err(Error::InvalidArgument(
                "epochs, steps_per_epoch and batch_size must be at least 1".to_string(),
            ));
        }
        if self.learning_rate <= 0.0 || self.l2 < 0.0 {
            return Err(Error::InvalidArgument(
                "learning_rate must be > 0 and l2 >= 0".to_string(),
            ));
        }
        Ok(())
    }

    fn adam(&self) -> AdamParams {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// What a finished training run reports.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainOutcome {
    /// Mean of (batch MSE + L2 penalty) per epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
    pub train_seconds: f64,
}

/// Trains a model with MSE + L2 and Adam, walking the training windows in
/// chronological order and wrapping at the end.
///
/// One step is one optimizer update on one batch. Fully reproducible for a
/// fixed (seed, data, config) triple. A non-finite loss, activation or
/// gradient aborts with a divergence error naming the epoch and step.
pub fn train(model: &mut Model, windows: &WindowSet<'_>, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n_windows = windows.count();
    if n_windows == 0 {
        return Err(Error::InvalidArgument(
            "no training windows available".to_string(),
        ));
    }

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(model.param_count(), cfg.adam());
    let mut cursor = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let scale = 1.0 / cfg.batch_size as f64;

    for epoch in 0..cfg.epochs {
        let mut epoch_loss = 0.0;
        for step in 0..cfg.steps_per_epoch {
            let diverged = |e: Error| match e {
                Error::NonFinite { context } => Error::Divergence {
                    epoch,
                    step,
                    detail: format!("non-finite values in {context}"),
                },
                other => other,
            };

            model.zero_grad();
            let mut batch_mse = 0.0;
            for _ in 0..cfg.batch_size {
                let batch = windows.window(cursor);
                cursor = (cursor + 1) % n_windows;
                let pred = model
                    .forward(&batch.input, Mode::Train, &mut rng)
                    .map_err(diverged)?;
                let (mse, mut grad) = mse_loss(&pred, &batch.target)?;
                batch_mse += mse;
                // Average the batch by scaling each window's contribution.
                for g in grad.data_mut() {
                    *g *= scale;
                }
                model.backward(&grad)?;
            }
            batch_mse *= scale;
            let penalty = model.l2_penalty(cfg.l2);
            let loss = batch_mse + penalty;
            if !loss.is_finite() {
                return Err(Error::Divergence {
                    epoch,
                    step,
                    detail: format!("loss became {loss}"),
                });
            }
            adam.step(model.params_mut()).map_err(diverged)?;
            epoch_loss += loss;
        }
        epoch_losses.push(epoch_loss / cfg.steps_per_epoch as f64);
    }

    Ok(TrainOutcome {
        epoch_losses,
        steps: cfg.epochs * cfg.steps_per_epoch,
        train_seconds: started.elapsed().as_secs_f64(),
    })
}
