//! Mini-batch SGD with momentum and accuracy-based early stopping.

use serde::{Deserialize, Serialize};

use crate::encode::GrayImage;
use crate::error::{Error, Result};
use crate::ingest::Label;
use crate::rng::{derive_seed, rng_from_seed};
use rand::Rng;

use super::{batch_loss, loss_and_backward, predict, Gradients, ModelParams, Preset};

/// Training hyperparameters. The defaults are what every reported run uses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Stop after this many epochs without a validation-accuracy improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            max_epochs: 50,
            patience: 5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        // learning_rate 0 is allowed: it trains nothing but is well defined,
        // and "0 leaves parameters unchanged" is a useful test fixture.
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::invalid("nn", "learning_rate must be finite and >= 0"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("nn", "momentum must be in [0, 1)"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("nn", "batch_size must be positive"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("nn", "max_epochs must be positive"));
        }
        Ok(())
    }
}

/// Per-epoch progress record.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_accuracy: f64,
}

/// A trained model plus how it got there.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub history: Vec<EpochStats>,
    /// Epoch whose parameters were kept (best validation accuracy).
    pub best_epoch: usize,
    pub best_valid_accuracy: f64,
}

fn accuracy(params: &ModelParams, data: &[(GrayImage, Label)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::invalid("nn", "empty validation set"));
    }
    let mut hits = 0usize;
    for (image, label) in data {
        if predict(params, image)? == *label {
            hits += 1;
        }
    }
    Ok(hits as f64 / data.len() as f64)
}

/// Train a fresh `preset` model on `train`, early-stopping on `valid`
/// accuracy. Deterministic in `config.seed`: initialization and the
/// per-epoch shuffles derive from it and nothing else.
pub fn train(
    preset: Preset,
    train: &[(GrayImage, Label)],
    valid: &[(GrayImage, Label)],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::invalid("nn", "empty training set"));
    }
    if valid.is_empty() {
        return Err(Error::invalid("nn", "empty validation set"));
    }

    let mut params = ModelParams::init(preset, derive_seed(config.seed, 0xA0));
    let mut velocity = Gradients::zeros(&params.config);
    let mut order: Vec<usize> = (0..train.len()).collect();

    let mut history = Vec::new();
    let mut best_params = params.clone();
    let mut best_accuracy = accuracy(&params, valid)?;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;

    for epoch in 1..=config.max_epochs {
        let mut rng = rng_from_seed(derive_seed(config.seed, 0xB0 + epoch as u64));
        for i in (1..order.len()).rev() {
            let j = rng.random_range(0..=i);
            order.swap(i, j);
        }

        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(GrayImage, Label)> =
                chunk.iter().map(|&i| train[i].clone()).collect();
            let (loss, grads) = loss_and_backward(&params, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            epoch_loss += loss;
            batches += 1;
            step(&mut params, &mut velocity, &grads, config);
        }
        let train_loss = epoch_loss / batches as f64;
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }

        let valid_accuracy = accuracy(&params, valid)?;
        history.push(EpochStats { epoch, train_loss, valid_accuracy });

        if valid_accuracy > best_accuracy {
            best_accuracy = valid_accuracy;
            best_params = params.clone();
            best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }

    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch,
        best_valid_accuracy: best_accuracy,
    })
}

/// One momentum update: v = mu*v - lr*g; theta += v.
fn step(params: &mut ModelParams, velocity: &mut Gradients, grads: &Gradients, config: &TrainConfig) {
    let (mu, lr) = (config.momentum, config.learning_rate);
    let pairs: [(&mut Vec<f64>, &Vec<f64>, &mut Vec<f64>); 8] = [
        (&mut params.c1_kernels, &grads.c1_kernels, &mut velocity.c1_kernels),
        (&mut params.c1_biases, &grads.c1_biases, &mut velocity.c1_biases),
        (&mut params.c2_kernels, &grads.c2_kernels, &mut velocity.c2_kernels),
        (&mut params.c2_biases, &grads.c2_biases, &mut velocity.c2_biases),
        (&mut params.f1_weights, &grads.f1_weights, &mut velocity.f1_weights),
        (&mut params.f1_biases, &grads.f1_biases, &mut velocity.f1_biases),
        (&mut params.out_weights, &grads.out_weights, &mut velocity.out_weights),
        (&mut params.out_biases, &grads.out_biases, &mut velocity.out_biases),
    ];
    for (theta, g, v) in pairs {
        for i in 0..theta.len() {
            v[i] = mu * v[i] - lr * g[i];
            theta[i] += v[i];
        }
    }
}

/// Plain descent smoke helper: run `steps` full-batch updates without
/// momentum and return the loss after each. Exists for tests that pin the
/// "loss goes down" behavior without the full training loop.
pub fn descend_full_batch(
    params: &mut ModelParams,
    batch: &[(GrayImage, Label)],
    learning_rate: f64,
    steps: usize,
) -> Result<Vec<f64>> {
    let mut losses = Vec::with_capacity(steps);
    let mut velocity = Gradients::zeros(&params.config);
    let config = TrainConfig {
        learning_rate,
        momentum: 0.0,
        ..TrainConfig::default()
    };
    for _ in 0..steps {
        let (_, grads) = loss_and_backward(params, batch)?;
        step(params, &mut velocity, &grads, &config);
        losses.push(batch_loss(params, batch)?);
    }
    Ok(losses)
}
