//! Multinomial logistic regression trained by seeded mini-batch gradient
//! descent with early stopping on a validation monitor.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::features::FeatureVector;
use super::{Normalization, RefModel, MODEL_SCHEMA_VERSION};
use crate::{Error, Real, Result};

/// Labeled feature vectors sharing one label space.
#[derive(Debug, Clone)]
pub struct FeatureSet<T> {
    pub label_space: Vec<String>,
    /// (features, label index into `label_space`).
    pub samples: Vec<(FeatureVector<T>, usize)>,
}

impl<T: Real> FeatureSet<T> {
    pub fn new(label_space: Vec<String>) -> Self {
        FeatureSet {
            label_space,
            samples: Vec::new(),
        }
    }

    pub fn push(&mut self, features: FeatureVector<T>, label: usize) {
        assert!(label < self.label_space.len(), "label index out of range");
        self.samples.push((features, label));
    }

    fn dim(&self) -> Option<usize> {
        self.samples.first().map(|(fv, _)| fv.dim())
    }
}

/// What the validation set is scored with after each epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    /// Fraction of validation samples whose argmax matches the label.
    ValidationAccuracy,
    /// Mean validation cross-entropy.
    ValidationLoss,
}

/// Optimizer and stopping knobs. Defaults mirror the shipped recipe:
/// learning rate 0.1, batch 32, at most 20 epochs, patience 2.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving epochs tolerated before stopping.
    pub patience: usize,
    pub monitor: Monitor,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.1,
            batch_size: 32,
            max_epochs: 20,
            patience: 2,
            monitor: Monitor::ValidationAccuracy,
            seed: 0,
        }
    }
}

/// Dense linear layer with per-class bias; weights are row-major C x D.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearSoftmax<T> {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

impl<T: Real> LinearSoftmax<T> {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        LinearSoftmax {
            classes,
            dim,
            weights: vec![T::zero(); classes * dim],
            bias: vec![T::zero(); classes],
        }
    }

    pub fn logits(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.dim);
        (0..self.classes)
            .map(|c| {
                let row = &self.weights[c * self.dim..(c + 1) * self.dim];
                let mut acc = self.bias[c];
                for (w, v) in row.iter().zip(x) {
                    acc += *w * *v;
                }
                acc
            })
            .collect()
    }

    /// Max-subtracted softmax; rows of probabilities sum to 1.
    pub fn probabilities(&self, x: &[T]) -> Vec<T> {
        softmax(&self.logits(x))
    }
}

pub(crate) fn softmax<T: Real>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: T = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Gradient of the mean cross-entropy with respect to weights and bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T> {
    pub weights: Vec<T>,
    pub bias: Vec<T>,
}

/// Mean cross-entropy over the batch and its exact gradient.
///
/// For softmax cross-entropy the per-sample logit gradient is simply
/// `p - onehot(y)`; everything else is the chain rule through the linear
/// layer, averaged over the batch.
pub fn loss_and_gradient<T: Real>(
    params: &LinearSoftmax<T>,
    batch: &[(&[T], usize)],
) -> Result<(T, Gradient<T>)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty batch".into()));
    }
    let n = T::from_f64_lossy(batch.len() as f64);
    let mut loss = T::zero();
    let mut grad = Gradient {
        weights: vec![T::zero(); params.weights.len()],
        bias: vec![T::zero(); params.bias.len()],
    };
    for &(x, y) in batch {
        if x.len() != params.dim {
            return Err(Error::DimensionMismatch {
                expected: params.dim,
                got: x.len(),
            });
        }
        if y >= params.classes {
            return Err(Error::Parameter(format!(
                "label {y} outside {} classes",
                params.classes
            )));
        }
        let p = params.probabilities(x);
        // Clamp away from zero so crafted inputs cannot produce inf loss.
        let tiny = T::from_f64_lossy(1e-300);
        loss -= p[y].max(tiny).ln();
        for c in 0..params.classes {
            let delta = if c == y { p[c] - T::one() } else { p[c] };
            grad.bias[c] += delta / n;
            let row = &mut grad.weights[c * params.dim..(c + 1) * params.dim];
            for (g, v) in row.iter_mut().zip(x) {
                *g += delta * *v / n;
            }
        }
    }
    Ok((loss / n, grad))
}

/// Decision after observing one epoch's monitor value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    NoImprovement,
    /// Patience exhausted; training should halt after this epoch.
    Stop,
}

/// Strict-improvement early stopping: ties count as no improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    higher_is_better: bool,
    best: Option<f64>,
    best_epoch: usize,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize, higher_is_better: bool) -> Self {
        EarlyStopping {
            patience,
            higher_is_better,
            best: None,
            best_epoch: 0,
            since_best: 0,
        }
    }

    /// Epoch numbers are 1-based for reporting.
    pub fn observe(&mut self, epoch: usize, value: f64) -> StopDecision {
        let improved = match self.best {
            None => true,
            Some(best) => {
                if self.higher_is_better {
                    value > best
                } else {
                    value < best
                }
            }
        };
        if improved {
            self.best = Some(value);
            self.best_epoch = epoch;
            self.since_best = 0;
            StopDecision::Improved
        } else {
            self.since_best += 1;
            if self.since_best >= self.patience {
                StopDecision::Stop
            } else {
                StopDecision::NoImprovement
            }
        }
    }

    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }
}

/// One epoch's numbers as recorded in the training report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's mini-batches.
    pub train_loss: f64,
    /// Validation monitor value after the epoch.
    pub monitor_value: f64,
}

/// Everything a rerun needs to verify it matched: losses, monitor values,
/// the restored epoch and whether patience triggered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

/// Train a reference model. Same inputs and config, same model bytes and
/// same report. The returned model carries the weights of the best epoch
/// under the configured monitor, not the last one.
pub fn train<T: Real>(
    train_set: &FeatureSet<T>,
    val_set: &FeatureSet<T>,
    cfg: &TrainConfig,
) -> Result<(RefModel<T>, TrainReport)> {
    if train_set.label_space != val_set.label_space {
        return Err(Error::Parameter("train and val label spaces differ".into()));
    }
    if cfg.learning_rate <= 0.0 || cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::Parameter("bad optimizer configuration".into()));
    }
    let classes = train_set.label_space.len();
    if classes < 2 {
        return Err(Error::Parameter("need at least two classes".into()));
    }
    let dim = train_set
        .dim()
        .ok_or_else(|| Error::Parameter("empty training set".into()))?;
    if val_set.samples.is_empty() {
        return Err(Error::Parameter("empty validation set".into()));
    }
    for (fv, y) in train_set.samples.iter().chain(&val_set.samples) {
        if fv.dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: fv.dim(),
            });
        }
        if *y >= classes {
            return Err(Error::Parameter(format!("label index {y} out of range")));
        }
    }
    for (c, name) in train_set.label_space.iter().enumerate() {
        if !train_set.samples.iter().any(|&(_, y)| y == c) {
            return Err(Error::DegenerateClass(name.clone()));
        }
    }

    // Normalization statistics come from the training split alone.
    let norm = Normalization::fit(train_set.samples.iter().map(|(fv, _)| fv));
    let xs: Vec<Vec<T>> = train_set
        .samples
        .iter()
        .map(|(fv, _)| norm.apply(fv))
        .collect();
    let ys: Vec<usize> = train_set.samples.iter().map(|&(_, y)| y).collect();
    let val_xs: Vec<Vec<T>> = val_set
        .samples
        .iter()
        .map(|(fv, _)| norm.apply(fv))
        .collect();
    let val_ys: Vec<usize> = val_set.samples.iter().map(|&(_, y)| y).collect();

    let mut params = LinearSoftmax::zeros(classes, dim);
    let mut best_params = params.clone();
    let higher_is_better = matches!(cfg.monitor, Monitor::ValidationAccuracy);
    let mut stopper = EarlyStopping::new(cfg.patience, higher_is_better);
    let mut report = TrainReport {
        epochs: Vec::new(),
        best_epoch: 0,
        stopped_early: false,
    };
    let lr = T::from_f64_lossy(cfg.learning_rate);

    let mut order: Vec<usize> = (0..xs.len()).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng = epoch_rng(cfg.seed, epoch as u64);
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0f64;
        let mut seen = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<(&[T], usize)> =
                chunk.iter().map(|&i| (xs[i].as_slice(), ys[i])).collect();
            let (loss, grad) = loss_and_gradient(&params, &batch)?;
            for (w, g) in params.weights.iter_mut().zip(&grad.weights) {
                *w -= lr * *g;
            }
            for (b, g) in params.bias.iter_mut().zip(&grad.bias) {
                *b -= lr * *g;
            }
            loss_sum += loss.to_f64_lossy() * chunk.len() as f64;
            seen += chunk.len();
        }

        let monitor_value = match cfg.monitor {
            Monitor::ValidationAccuracy => accuracy(&params, &val_xs, &val_ys),
            Monitor::ValidationLoss => mean_loss(&params, &val_xs, &val_ys)?,
        };
        report.epochs.push(EpochStats {
            epoch,
            train_loss: loss_sum / seen as f64,
            monitor_value,
        });

        match stopper.observe(epoch, monitor_value) {
            StopDecision::Improved => best_params = params.clone(),
            StopDecision::NoImprovement => {}
            StopDecision::Stop => {
                report.stopped_early = true;
                break;
            }
        }
    }
    report.best_epoch = stopper.best_epoch();

    let model = RefModel {
        version: MODEL_SCHEMA_VERSION,
        label_space: train_set.label_space.clone(),
        normalization: norm,
        linear: best_params,
    };
    Ok((model, report))
}

fn epoch_rng(seed: u64, epoch: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[0..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&epoch.to_le_bytes());
    key[24..32].copy_from_slice(b"SID_TRN1");
    ChaCha8Rng::from_seed(key)
}

fn accuracy<T: Real>(params: &LinearSoftmax<T>, xs: &[Vec<T>], ys: &[usize]) -> f64 {
    let correct = xs
        .iter()
        .zip(ys)
        .filter(|(x, &y)| argmax(&params.probabilities(x)) == y)
        .count();
    correct as f64 / xs.len() as f64
}

fn mean_loss<T: Real>(params: &LinearSoftmax<T>, xs: &[Vec<T>], ys: &[usize]) -> Result<f64> {
    let batch: Vec<(&[T], usize)> = xs.iter().map(|x| x.as_slice()).zip(ys.iter().copied()).collect();
    let (loss, _) = loss_and_gradient(params, &batch)?;
    Ok(loss.to_f64_lossy())
}

/// First maximal index; deterministic under ties.
pub(crate) fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}
