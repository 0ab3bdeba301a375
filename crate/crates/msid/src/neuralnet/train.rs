//! Multi-class training loop with per-epoch shuffling, early stopping on
//! validation accuracy, and best-epoch weight restoration.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::adam::{adam_step, AdamState};
use super::network::{backward, build_network, forward, images_to_batch, Checkpoint, EpochRecord, NetworkSpec};
use super::ops::cross_entropy;
use super::tensor::Tensor;
use crate::encoding::SignalImage;
use crate::error::{Error, Result};

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    pub runs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            epochs: 50,
            batch_size: 32,
            patience: 5,
            seed: 0,
            runs: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epoch count must be at least 1"));
        }
        if ![32, 64, 128].contains(&self.batch_size) {
            return Err(Error::invalid(format!(
                "batch size {} not one of 32, 64, 128",
                self.batch_size
            )));
        }
        if self.runs == 0 {
            return Err(Error::invalid("run count must be at least 1"));
        }
        Ok(())
    }
}

fn check_dataset(set: &[(SignalImage, usize)], num_classes: usize, what: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::invalid(format!("{what} set is empty")));
    }
    for (_, label) in set {
        if *label >= num_classes {
            return Err(Error::invalid(format!(
                "{what} label {label} out of range for {num_classes} classes"
            )));
        }
    }
    Ok(())
}

fn batch_of(set: &[(SignalImage, usize)], idx: &[usize]) -> Result<(Tensor, Vec<usize>)> {
    let images: Vec<&SignalImage> = idx.iter().map(|&i| &set[i].0).collect();
    let labels: Vec<usize> = idx.iter().map(|&i| set[i].1).collect();
    Ok((images_to_batch(&images)?, labels))
}

fn argmax_row(probs: &Tensor, row: usize) -> usize {
    let k = probs.shape()[1];
    let r = &probs.data()[row * k..(row + 1) * k];
    let mut best = 0;
    for (i, &v) in r.iter().enumerate() {
        if v > r[best] {
            best = i;
        }
    }
    best
}

/// Mean loss and accuracy of a checkpoint over a dataset, inference mode.
pub fn evaluate(ckpt: &Checkpoint, set: &[(SignalImage, usize)], batch_size: usize) -> Result<(f64, f64)> {
    check_dataset(set, ckpt.spec.num_classes, "evaluation")?;
    let indices: Vec<usize> = (0..set.len()).collect();
    let mut loss_sum = 0.0;
    let mut correct = 0usize;
    for chunk in indices.chunks(batch_size) {
        let (batch, labels) = batch_of(set, chunk)?;
        let pass = forward(ckpt, &batch, false, 0)?;
        loss_sum += cross_entropy(&pass.probabilities, &labels)? * chunk.len() as f64;
        for (row, &label) in labels.iter().enumerate() {
            if argmax_row(&pass.probabilities, row) == label {
                correct += 1;
            }
        }
    }
    Ok((loss_sum / set.len() as f64, correct as f64 / set.len() as f64))
}

/// Mixes a base seed with a stream index into a fresh stream seed.
pub(crate) fn derive_seed(base: u64, stream: u64) -> u64 {
    base.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

/// Trains one network on (image, label) pairs with dense labels in
/// 0..num_classes. Runs up to `config.epochs` epochs, shuffling each epoch
/// from the run seed, and stops once validation accuracy has failed to
/// improve for more than `patience` consecutive epochs. The returned
/// checkpoint holds the weights of the best validation epoch and the full
/// per-epoch log.
pub fn train_multiclass(
    spec: &NetworkSpec,
    config: &TrainConfig,
    train_set: &[(SignalImage, usize)],
    val_set: &[(SignalImage, usize)],
) -> Result<Checkpoint> {
    config.validate()?;
    check_dataset(train_set, spec.num_classes, "training")?;
    check_dataset(val_set, spec.num_classes, "validation")?;
    let mut ckpt = build_network(spec, config.seed)?;
    let mut state = AdamState::new();
    let mut log = Vec::new();
    let mut best_weights = ckpt.weights.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut stale = 0usize;
    for epoch in 1..=config.epochs {
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(epoch_seed));
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for (bi, chunk) in order.chunks(config.batch_size).enumerate() {
            let (batch, labels) = batch_of(train_set, chunk)?;
            let dropout_seed = derive_seed(epoch_seed, bi as u64 + 1);
            let pass = forward(&ckpt, &batch, true, dropout_seed)?;
            let (grads, loss) = backward(&ckpt, &pass, &labels)?;
            loss_sum += loss * chunk.len() as f64;
            for (row, &label) in labels.iter().enumerate() {
                if argmax_row(&pass.probabilities, row) == label {
                    correct += 1;
                }
            }
            adam_step(&mut ckpt.weights, &grads, &mut state, config.learning_rate)?;
        }
        let (val_loss, val_acc) = evaluate(&ckpt, val_set, config.batch_size)?;
        log.push(EpochRecord {
            epoch,
            train_loss: loss_sum / train_set.len() as f64,
            train_acc: correct as f64 / train_set.len() as f64,
            val_loss,
            val_acc,
        });
        if val_acc > best_acc {
            best_acc = val_acc;
            best_weights = ckpt.weights.clone();
            stale = 0;
        } else {
            stale += 1;
            if stale > config.patience {
                break;
            }
        }
    }
    Ok(Checkpoint {
        spec: spec.clone(),
        weights: best_weights,
        training_log: log,
    })
}

/// Trains `config.runs` networks with consecutive seeds and keeps the one
/// whose best validation accuracy is highest (earlier runs win ties).
pub fn train_best_of_runs(
    spec: &NetworkSpec,
    config: &TrainConfig,
    train_set: &[(SignalImage, usize)],
    val_set: &[(SignalImage, usize)],
) -> Result<Checkpoint> {
    config.validate()?;
    let mut best: Option<(f64, Checkpoint)> = None;
    for run in 0..config.runs {
        let run_config = TrainConfig {
            seed: config.seed.wrapping_add(run as u64),
            runs: 1,
            ..config.clone()
        };
        let ckpt = train_multiclass(spec, &run_config, train_set, val_set)?;
        let acc = ckpt
            .training_log
            .iter()
            .map(|r| r.val_acc)
            .fold(f64::NEG_INFINITY, f64::max);
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, ckpt));
        }
    }
    Ok(best.expect("at least one run").1)
}
