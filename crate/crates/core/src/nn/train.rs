//! Mini-batch Adam training with linear warmup, cosine decay and
//! curriculum masking.

use std::f64::consts::PI;
use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Mode, Network};
use crate::augment::{curriculum_mask, AugmentConfig};
use crate::error::{Error, Result};
use crate::observation::FeatureTensor;
use crate::seeds::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub warmup_epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub masking: bool,
    pub augment: AugmentConfig,
    /// Rescale inputs by per-channel RMS of the training set before training.
    pub fit_input_scale: bool,
    pub seed: u64,
    /// Weights are written here after every epoch when set.
    pub checkpoint: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            learning_rate: 1e-3,
            warmup_epochs: 5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            masking: true,
            augment: AugmentConfig::default(),
            fit_input_scale: true,
            seed: 0,
            checkpoint: None,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::invalid("batch size must be at least 1"));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be non-negative"));
        }
        self.augment.check()
    }

    /// Learning rate for `epoch`: linear warmup then cosine decay to zero.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if epoch < self.warmup_epochs {
            return self.learning_rate * (epoch + 1) as f64 / self.warmup_epochs as f64;
        }
        let span = self.epochs.saturating_sub(self.warmup_epochs).max(1) as f64;
        let p = (epoch - self.warmup_epochs) as f64 / span;
        self.learning_rate * 0.5 * (1.0 + (PI * p).cos())
    }
}

/// Samples with unit-box targets.
#[derive(Debug, Clone, Default)]
pub struct TrainSet {
    pub features: Vec<FeatureTensor>,
    pub targets: Vec<Vec<f64>>,
}

impl TrainSet {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn push(&mut self, features: FeatureTensor, target: Vec<f64>) {
        self.features.push(features);
        self.targets.push(target);
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(size: usize, beta1: f64, beta2: f64, epsilon: f64) -> Self {
        Adam {
            m: vec![0.0; size],
            v: vec![0.0; size],
            t: 0,
            beta1,
            beta2,
            epsilon,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.epsilon);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: f64,
    /// Mean absolute error of clamped predictions.
    pub val_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: Network,
    pub history: Vec<EpochStats>,
}

/// Validation loss (raw outputs) and MAE (clamped outputs).
pub fn evaluate(net: &Network, set: &TrainSet, batch_size: usize) -> Result<(f64, f64)> {
    if set.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let (mut sq, mut abs, mut count) = (0.0, 0.0, 0usize);
    for chunk in (0..set.len()).collect::<Vec<_>>().chunks(batch_size.max(1)) {
        let batch = net.batch(chunk.iter().map(|&i| &set.features[i]))?;
        let raw = net.forward_raw(&batch, Mode::Eval);
        for (row, &i) in raw.iter().zip(chunk) {
            for (v, t) in row.iter().zip(&set.targets[i]) {
                sq += (v - t).powi(2);
                abs += (v.clamp(0.0, 1.0) - t).abs();
                count += 1;
            }
        }
    }
    Ok((sq / count as f64, abs / count as f64))
}

/// Trains `net` in place on `train`, scoring `val` after every epoch.
/// `progress` sees each epoch's statistics as they are produced.
pub fn train(
    mut net: Network,
    train: &TrainSet,
    val: &TrainSet,
    cfg: &TrainConfig,
    mut progress: impl FnMut(&EpochStats),
) -> Result<TrainOutcome> {
    cfg.check()?;
    if train.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if cfg.fit_input_scale {
        net.fit_input_scale(&train.features);
    }
    let mut adam = Adam::new(net.params().len(), cfg.beta1, cfg.beta2, cfg.epsilon);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1, epoch as u64]));
        order.shuffle(&mut rng);
        let (mut total, mut seen) = (0.0, 0usize);
        for (k, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let masked: Vec<FeatureTensor>;
            let inputs: Vec<&FeatureTensor> = if cfg.masking {
                masked = chunk
                    .iter()
                    .map(|&i| {
                        let s = derive_seed(cfg.seed, &[2, epoch as u64, i as u64]);
                        curriculum_mask(&train.features[i], epoch, &cfg.augment, s)
                    })
                    .collect();
                masked.iter().collect()
            } else {
                chunk.iter().map(|&i| &train.features[i]).collect()
            };
            let batch = net.batch(inputs)?;
            let targets: Vec<Vec<f64>> = chunk.iter().map(|&i| train.targets[i].clone()).collect();
            let mode = Mode::Train {
                seed: derive_seed(cfg.seed, &[3, epoch as u64, k as u64]),
            };
            let g = net
                .loss_and_gradients(&batch, &targets, mode, 1.0)
                .map_err(|_| Error::TrainingDiverged { epoch })?;
            if g.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::TrainingDiverged { epoch });
            }
            adam.step(net.params_mut(), &g.values, lr);
            total += g.loss * chunk.len() as f64;
            seen += chunk.len();
        }
        let (val_loss, val_mae) = evaluate(&net, val, cfg.batch_size)?;
        let stats = EpochStats {
            epoch,
            learning_rate: lr,
            train_loss: total / seen as f64,
            val_loss,
            val_mae,
        };
        if !stats.train_loss.is_finite() || net.params().iter().any(|v| !v.is_finite()) {
            return Err(Error::TrainingDiverged { epoch });
        }
        progress(&stats);
        history.push(stats);
        if let Some(path) = &cfg.checkpoint {
            super::write_weights(&net, std::io::BufWriter::new(std::fs::File::create(path)?))?;
        }
    }
    Ok(TrainOutcome { network: net, history })
}
