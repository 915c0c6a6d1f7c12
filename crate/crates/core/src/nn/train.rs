//! Mini-batch denoising training with early stopping on a temporal
//! validation split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dae::{corrupt, dae_gradient, reconstruction_loss, DaeParams, DropoutMasks, Example};
use super::optim::{adam_step, OptimizerState};
use super::tensor::{Parameters, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_PATIENCE: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub noise_sigma: f64,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            patience: DEFAULT_PATIENCE,
            batch_size: 32,
            learning_rate: 1e-3,
            noise_sigma: 0.05,
            validation_fraction: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.patience == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "max_epochs, patience and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "noise_sigma {} must be non-negative",
                self.noise_sigma
            )));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::Config(format!(
                "validation_fraction {} must lie in (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs_run: usize,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub validation_loss: Vec<f64>,
    pub train_loss: Vec<f64>,
}

/// Tracks the best validation loss and decides when to stop.
///
/// An epoch only counts as an improvement when its loss is strictly below
/// the best seen so far.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    epoch: usize,
    best_epoch: usize,
    best_loss: f64,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            epoch: 0,
            best_epoch: 0,
            best_loss: f64::INFINITY,
        }
    }

    /// Records the next epoch's loss. Returns `true` if it is a new best.
    pub fn observe(&mut self, loss: f64) -> bool {
        self.epoch += 1;
        if loss < self.best_loss {
            self.best_loss = loss;
            self.best_epoch = self.epoch;
            true
        } else {
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.epoch - self.best_epoch >= self.patience
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best_loss
    }
}

/// Number of trailing windows held out for validation.
pub fn validation_count(total: usize, fraction: f64) -> usize {
    ((total as f64 * fraction).round() as usize).clamp(1, total.saturating_sub(1).max(1))
}

/// Mean clean-input reconstruction MSE with dropout disabled.
pub fn validation_loss(params: &DaeParams, windows: &[Tensor]) -> Result<f64> {
    let mut total = 0.0;
    for w in windows {
        total += reconstruction_loss(&params.infer(w)?, w)?;
    }
    Ok(total / windows.len() as f64)
}

/// Trains `initial` on `windows` and returns the best-validation weights.
///
/// The last `validation_fraction` of windows (in the given order) form the
/// validation set. Every random draw comes from one generator seeded with
/// `config.seed`, consumed in a fixed order: shuffle, then per example a
/// dropout mask followed by corruption noise.
pub fn train_dae(initial: &DaeParams, windows: &[Tensor], config: &TrainConfig) -> Result<(DaeParams, TrainReport)> {
    config.validate()?;
    initial.validate()?;
    if windows.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "training needs at least 2 windows, got {}",
            windows.len()
        )));
    }
    for w in windows {
        if w.len() != initial.window_size {
            return Err(Error::Dimension(format!(
                "training window of length {} for window_size {}",
                w.len(),
                initial.window_size
            )));
        }
    }

    let n_val = validation_count(windows.len(), config.validation_fraction);
    let (train, val) = windows.split_at(windows.len() - n_val);

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut params = initial.clone();
    let mut state = OptimizerState::new(&params);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best = params.clone();
    let mut val_history = Vec::new();
    let mut train_history = Vec::new();

    while stopper.epoch() < config.max_epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            let mut masks = Vec::with_capacity(chunk.len());
            for &i in chunk {
                masks.push(DropoutMasks::sample(params.window_size, params.dropout_p, &mut rng));
                batch.push(Example {
                    input: corrupt(&train[i], config.noise_sigma, &mut rng),
                    target: train[i].clone(),
                });
            }
            let (loss, grads) = dae_gradient(&params, &batch, &masks)?;
            adam_step(&mut params, &grads, &mut state, config.learning_rate);
            if !params.all_finite() {
                return Err(Error::Training(format!(
                    "parameters became non-finite at epoch {}",
                    stopper.epoch() + 1
                )));
            }
            epoch_loss += loss * chunk.len() as f64;
        }
        train_history.push(epoch_loss / train.len() as f64);

        let v = validation_loss(&params, val)?;
        if !v.is_finite() {
            return Err(Error::Training("validation loss became non-finite".into()));
        }
        val_history.push(v);
        if stopper.observe(v) {
            best = params.clone();
        }
        if stopper.should_stop() {
            break;
        }
    }

    let report = TrainReport {
        epochs_run: stopper.epoch(),
        best_epoch: stopper.best_epoch(),
        best_validation_loss: stopper.best_loss(),
        validation_loss: val_history,
        train_loss: train_history,
    };
    Ok((best, report))
}
