//! Minibatch SGD with momentum, weight decay and a step learning-rate decay.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::engine::Plan;
use super::params::ModelParams;
use super::spec::NetworkSpec;
use super::{batch_gradients, TRUE_CLASS};
use crate::{child_seed, seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Multiplier applied to the learning rate once `lr_decay_at` of the
    /// epochs have run.
    pub lr_decay_factor: f64,
    pub lr_decay_at: f64,
    pub momentum: f64,
    /// L2 penalty on weights (biases are not decayed).
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// DropConnect keep probability.
    pub keep_prob: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.01,
            lr_decay_factor: 0.1,
            lr_decay_at: 2.0 / 3.0,
            momentum: 0.9,
            weight_decay: 5e-4,
            batch_size: 64,
            epochs: 30,
            keep_prob: 0.5,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("training: {m}")));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and >= 0");
        }
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return bad("keep probability must be in (0, 1]");
        }
        if self.batch_size == 0 {
            return bad("batch size must be >= 1");
        }
        if !(0.0..1.0).contains(&self.momentum) || !(self.weight_decay >= 0.0) {
            return bad("momentum must be in [0, 1) and weight decay >= 0");
        }
        if !(self.lr_decay_factor > 0.0) || !(0.0..=1.0).contains(&self.lr_decay_at) {
            return bad("decay factor must be > 0 and decay point in [0, 1]");
        }
        Ok(())
    }

    /// Learning rate in effect during `epoch` (0-based).
    pub fn rate_at(&self, epoch: usize) -> f64 {
        let decay_epoch = (self.epochs as f64 * self.lr_decay_at).floor() as usize;
        if epoch >= decay_epoch {
            self.learning_rate * self.lr_decay_factor
        } else {
            self.learning_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
}

/// Trains from a He initialisation; `labels[i]` is true for a lesion.
pub fn train_sgd(spec: &NetworkSpec, inputs: &[&[f32]], labels: &[bool], cfg: &TrainConfig) -> Result<ModelParams<f32>> {
    train_sgd_with(spec, inputs, labels, cfg, |_| {})
}

/// [`train_sgd`] with a callback after every epoch.
pub fn train_sgd_with(
    spec: &NetworkSpec,
    inputs: &[&[f32]],
    labels: &[bool],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochStats),
) -> Result<ModelParams<f32>> {
    cfg.validate()?;
    if inputs.is_empty() {
        return Err(Error::Empty("training set"));
    }
    if inputs.len() != labels.len() {
        return Err(Error::InvalidConfig("inputs and labels differ in length".into()));
    }
    if labels.iter().all(|&l| l) || !labels.iter().any(|&l| l) {
        return Err(Error::SingleClass);
    }
    let classes: Vec<usize> = labels.iter().map(|&l| if l { TRUE_CLASS } else { 1 - TRUE_CLASS }).collect();
    let mut params = ModelParams::<f32>::init_he(spec, cfg.keep_prob, child_seed!(cfg.seed, "init"))?;
    params.meta.seed = cfg.seed;
    let mut velocity = ModelParams::<f32>::zeros(spec, cfg.keep_prob)?.layers;
    let momentum = cfg.momentum as f32;
    let decay = cfg.weight_decay as f32;

    let mut order: Vec<usize> = (0..inputs.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.rate_at(epoch) as f32;
        order.shuffle(&mut seed::rng(child_seed!(cfg.seed, "shuffle", epoch)));
        let mut loss_sum = 0.0;
        for (bi, idx) in order.chunks(cfg.batch_size).enumerate() {
            let rows: Vec<&[f32]> = idx.iter().map(|&i| inputs[i]).collect();
            let ys: Vec<usize> = idx.iter().map(|&i| classes[i]).collect();
            let plan = Plan::new(spec, &params)?;
            let g = batch_gradients(&plan, &rows, &ys, child_seed!(cfg.seed, "batch", epoch, bi))?;
            if !g.loss.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            loss_sum += g.loss * idx.len() as f64;
            for ((p, v), d) in params.layers.iter_mut().zip(velocity.iter_mut()).zip(g.layers) {
                for ((w, vw), gw) in p.weights.iter_mut().zip(v.weights.iter_mut()).zip(d.weights) {
                    *vw = momentum * *vw - lr * (gw + decay * *w);
                    *w += *vw;
                }
                for ((b, vb), gb) in p.biases.iter_mut().zip(v.biases.iter_mut()).zip(d.biases) {
                    *vb = momentum * *vb - lr * gb;
                    *b += *vb;
                }
            }
        }
        let mean_loss = loss_sum / inputs.len() as f64;
        if !mean_loss.is_finite() || !params.all_finite() {
            return Err(Error::Diverged { epoch });
        }
        params.meta.epochs_run = epoch + 1;
        params.meta.final_loss = mean_loss;
        on_epoch(&EpochStats {
            epoch,
            mean_loss,
            learning_rate: f64::from(lr),
        });
    }
    Ok(params)
}
