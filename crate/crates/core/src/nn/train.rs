use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sigmoid, ModelSnapshot};
use crate::error::{Error, Result};
use crate::image::LabeledImage;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 12, batch_size: 8, learning_rate: 1e-3, seed: 0, optimizer: Optimizer::default() }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidArgument("epochs and batch_size must be at least 1".into()));
        }
        // zero is accepted as the no-update case
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!("learning rate {} must be non-negative", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    /// Mean binary cross-entropy over the epoch's forward passes.
    pub loss: f64,
    /// Fraction correct during the epoch (pre-update predictions).
    pub accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub model: ModelSnapshot<S>,
    pub log: Vec<EpochLog>,
    /// Accuracy of the returned model over the whole training set.
    pub final_accuracy: f64,
}

/// Mini-batch training with binary cross-entropy on the sigmoid output.
pub fn train<S: Scalar>(initial: &ModelSnapshot<S>, data: &[LabeledImage<S>], cfg: &TrainConfig) -> Result<TrainOutcome<S>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("empty training set".into()));
    }
    if let Some(bad) = data.iter().find(|d| d.label > 1) {
        return Err(Error::InvalidArgument(format!("label {} is not 0/1", bad.label)));
    }
    let positives = data.iter().filter(|d| d.label == 1).count();
    if positives == 0 || positives == data.len() {
        return Err(Error::SingleClass);
    }

    let mut model = initial.clone();
    let sizes: Vec<usize> = model.params().map(|(_, t)| t.len()).collect();
    let mut grads: Vec<Vec<S>> = sizes.iter().map(|&n| vec![S::zero(); n]).collect();
    let mut first: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut second: Vec<Vec<f64>> = sizes.iter().map(|&n| vec![0.0; n]).collect();
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (batch_no, batch) in order.chunks(cfg.batch_size).enumerate() {
            grads.iter_mut().for_each(|g| g.iter_mut().for_each(|v| *v = S::zero()));
            let mut batch_loss = 0.0;
            for &i in batch {
                let sample = &data[i];
                let trace = model.run(&sample.image)?;
                let logit = trace.logit.as_f64();
                let y = sample.label as f64;
                // softplus(z) - y z, stable for large |z|
                let loss = logit.max(0.0) - logit * y + (-logit.abs()).exp().ln_1p();
                batch_loss += loss;
                if (logit > 0.0) == (sample.label == 1) {
                    correct += 1;
                }
                let dlogit = S::of((sigmoid(logit) - y) / batch.len() as f64);
                model.backward(&trace, Some((&mut grads, dlogit, sample.image.pixels())), "conv1");
            }
            if !batch_loss.is_finite() || grads.iter().flatten().any(|g| !g.is_finite()) {
                return Err(Error::Diverged { epoch, batch: batch_no, loss: batch_loss });
            }
            loss_sum += batch_loss;
            step += 1;
            apply_update(&mut model, &grads, &mut first, &mut second, step, cfg);
        }
        log.push(EpochLog { epoch, loss: loss_sum / data.len() as f64, accuracy: correct as f64 / data.len() as f64 });
    }

    let final_accuracy = accuracy(&model, data)?;
    Ok(TrainOutcome { model, log, final_accuracy })
}

fn apply_update<S: Scalar>(
    model: &mut ModelSnapshot<S>,
    grads: &[Vec<S>],
    first: &mut [Vec<f64>],
    second: &mut [Vec<f64>],
    step: i32,
    cfg: &TrainConfig,
) {
    let lr = cfg.learning_rate;
    for (p, param) in model.params_mut().iter_mut().enumerate() {
        let values = param.data_mut();
        match cfg.optimizer {
            Optimizer::Sgd => {
                for (v, g) in values.iter_mut().zip(&grads[p]) {
                    *v = S::of(v.as_f64() - lr * g.as_f64());
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let bc1 = 1.0 - beta1.powi(step);
                let bc2 = 1.0 - beta2.powi(step);
                for (k, (v, g)) in values.iter_mut().zip(&grads[p]).enumerate() {
                    let g = g.as_f64();
                    first[p][k] = beta1 * first[p][k] + (1.0 - beta1) * g;
                    second[p][k] = beta2 * second[p][k] + (1.0 - beta2) * g * g;
                    let m_hat = first[p][k] / bc1;
                    let v_hat = second[p][k] / bc2;
                    *v = S::of(v.as_f64() - lr * m_hat / (v_hat.sqrt() + eps));
                }
            }
        }
    }
}

/// Fraction of images whose thresholded confidence matches the label.
pub fn accuracy<S: Scalar>(model: &ModelSnapshot<S>, data: &[LabeledImage<S>]) -> Result<f64> {
    let mut correct = 0;
    for d in data {
        let c = model.confidence(&d.image)?;
        if (c > 0.5) == (d.label == 1) {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len().max(1) as f64)
}
