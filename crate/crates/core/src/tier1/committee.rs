//! Committee of bootstrap-bagged linear hinge-loss classifiers.
//!
//! Each member is trained with Pegasos-style subgradient descent on the
//! L2-regularised hinge loss over its own bootstrap resample of the
//! standardised features. The committee score is the mean signed margin.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{child_seed, seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommitteeConfig {
    pub members: usize,
    pub epochs: usize,
    pub lambda: f64,
}

impl Default for CommitteeConfig {
    fn default() -> Self {
        Self {
            members: 5,
            epochs: 30,
            lambda: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMember {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl LinearMember {
    fn margin(&self, z: &[f64]) -> f64 {
        self.weights.iter().zip(z).map(|(w, x)| w * x).sum::<f64>() + self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteeModel {
    pub members: Vec<LinearMember>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl CommitteeModel {
    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    /// Mean signed margin of the members; positive leans towards a lesion.
    pub fn score(&self, features: &[f64]) -> f64 {
        let z = self.standardize(features);
        self.members.iter().map(|m| m.margin(&z)).sum::<f64>() / self.members.len() as f64
    }
}

fn train_member(z: &[Vec<f64>], y: &[f64], order: &[usize], cfg: &CommitteeConfig, rng: &mut seed::Rng) -> LinearMember {
    let dim = z[0].len();
    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let mut order = order.to_vec();
    let mut t = 0usize;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (cfg.lambda * t as f64);
            let margin = y[i] * (w.iter().zip(&z[i]).map(|(a, b)| a * b).sum::<f64>() + b);
            let shrink = 1.0 - eta * cfg.lambda;
            for wj in w.iter_mut() {
                *wj *= shrink;
            }
            if margin < 1.0 {
                for (wj, xj) in w.iter_mut().zip(&z[i]) {
                    *wj += eta * y[i] * xj;
                }
                b += eta * y[i];
            }
        }
    }
    LinearMember { weights: w, bias: b }
}

/// Trains `cfg.members` bagged hinge-loss classifiers.
pub fn train_committee(
    features: &[Vec<f64>],
    labels: &[bool],
    cfg: &CommitteeConfig,
    seed: u64,
) -> Result<CommitteeModel> {
    if features.len() != labels.len() {
        return Err(Error::InvalidConfig("features and labels differ in length".into()));
    }
    if !labels.iter().any(|&l| l) || labels.iter().all(|&l| l) {
        return Err(Error::SingleClass);
    }
    if cfg.members == 0 || cfg.epochs == 0 || !(cfg.lambda > 0.0) {
        return Err(Error::InvalidConfig(format!("bad committee config {cfg:?}")));
    }
    let n = features.len();
    let dim = features[0].len();
    let mut mean = vec![0.0; dim];
    for f in features {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut scale = vec![0.0; dim];
    for f in features {
        for ((s, x), m) in scale.iter_mut().zip(f).zip(&mean) {
            *s += (x - m).powi(2);
        }
    }
    let scale: Vec<f64> = scale
        .into_iter()
        .map(|s| {
            let sd = (s / n as f64).sqrt();
            if sd > 1e-12 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    let partial = CommitteeModel {
        members: Vec::new(),
        mean,
        scale,
    };
    let z: Vec<Vec<f64>> = features.iter().map(|f| partial.standardize(f)).collect();
    let y: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();

    let members = (0..cfg.members)
        .map(|k| {
            let mut rng = seed::rng(child_seed!(seed, "committee", k));
            let bootstrap: Vec<usize> = if cfg.members == 1 {
                (0..n).collect()
            } else {
                (0..n).map(|_| rng.gen_range(0..n)).collect()
            };
            train_member(&z, &y, &bootstrap, cfg, &mut rng)
        })
        .collect();
    Ok(CommitteeModel { members, ..partial })
}
