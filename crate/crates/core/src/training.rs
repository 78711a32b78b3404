//! Stochastic gradient descent and evaluation.

use serde::{Deserialize, Serialize};

use crate::data::{shuffle_epoch, Dataset};
use crate::error::{Error, Result};
use crate::model::{Model, ModelGrads};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr0: f64,
    /// Inverse-time decay per update.
    pub lr_decay: f64,
    /// L2 weight-decay coefficient.
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 0.01,
            lr_decay: 1e-5,
            l2: 1e-5,
            epochs: 5,
            batch_size: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 >= 0.0) || !self.lr0.is_finite() {
            return Err(Error::invalid(format!("lr0 must be non-negative, got {}", self.lr0)));
        }
        if !(self.lr_decay >= 0.0) || !(self.l2 >= 0.0) {
            return Err(Error::invalid("lr_decay and l2 must be non-negative"));
        }
        if self.batch_size == 0 {
            return Err(Error::invalid("batch_size must be positive"));
        }
        Ok(())
    }
}

/// `lr0 / (1 + λ·t)`.
pub fn lr_at(config: &TrainConfig, t: u64) -> f64 {
    config.lr0 / (1.0 + config.lr_decay * t as f64)
}

/// `w ← w − lr·(g + γ·w)` on every parameter tensor.
pub fn sgd_update(model: &mut Model, grads: &ModelGrads, lr: f64, l2: f64) -> Result<()> {
    let params = model.params();
    if grads.tensors.len() != params.len()
        || params.iter().zip(&grads.tensors).any(|(p, g)| p.shape() != g.shape())
    {
        return Err(Error::invalid("gradient set does not match model parameters"));
    }
    for (p, g) in model.params_mut().into_iter().zip(&grads.tensors) {
        for (w, &gv) in p.data_mut().iter_mut().zip(g.data()) {
            *w -= lr * (gv + l2 * *w);
        }
    }
    Ok(())
}

/// Owns a model and the update counter, which persists across epochs.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub updates: u64,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            model,
            config,
            updates: 0,
        })
    }

    pub fn current_lr(&self) -> f64 {
        lr_at(&self.config, self.updates)
    }

    /// One pass over `dataset` in [`shuffle_epoch`] order. Returns the mean
    /// pre-update energy of the visited samples.
    pub fn train_epoch(&mut self, dataset: &Dataset, epoch: u64) -> Result<f64> {
        if dataset.is_empty() {
            return Err(Error::invalid("cannot train on an empty dataset"));
        }
        let order = shuffle_epoch(dataset.len(), self.config.seed, epoch);
        let mut total = 0.0;
        for batch in order.chunks(self.config.batch_size) {
            let mut acc: Option<ModelGrads> = None;
            for &i in batch {
                let (energy, g) = self
                    .model
                    .energy_and_grads(&dataset.samples[i], dataset.labels[i] as usize)?;
                total += energy;
                match acc.as_mut() {
                    Some(a) => a.add_assign(&g),
                    None => acc = Some(g),
                }
            }
            let mut grads = acc.expect("non-empty batch");
            if batch.len() > 1 {
                grads.scale(1.0 / batch.len() as f64);
            }
            let lr = self.current_lr();
            sgd_update(&mut self.model, &grads, lr, self.config.l2)?;
            self.updates += 1;
        }
        Ok(total / dataset.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    pub error_rate: f64,
    pub mean_energy: f64,
    /// Rows are true classes, columns predictions.
    pub confusion: [[usize; 10]; 10],
    pub per_sample_energy: Vec<f64>,
    pub predictions: Vec<u8>,
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn evaluate(model: &Model, dataset: &Dataset) -> Result<Metrics> {
    let mut confusion = [[0usize; 10]; 10];
    let mut energies = Vec::with_capacity(dataset.len());
    let mut predictions = Vec::with_capacity(dataset.len());
    for (x, &label) in dataset.samples.iter().zip(&dataset.labels) {
        let out = model.forward(x, Some(label as usize))?;
        let pred = argmax(out.logits.data());
        confusion[label as usize][pred.min(9)] += 1;
        energies.push(out.energy.expect("target given"));
        predictions.push(pred as u8);
    }
    let n = dataset.len();
    let correct: usize = (0..10).map(|i| confusion[i][i]).sum();
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };
    let mean_energy = if n == 0 {
        0.0
    } else {
        energies.iter().sum::<f64>() / n as f64
    };
    Ok(Metrics {
        accuracy,
        error_rate: 1.0 - accuracy,
        mean_energy,
        confusion,
        per_sample_energy: energies,
        predictions,
    })
}
