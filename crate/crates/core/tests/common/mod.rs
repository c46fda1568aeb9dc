//! Finite-difference gradient checking shared by the network tests and the
//! acceptance suite.

#![allow(dead_code)]

use cascade_core::cnn::{backward, loss, LayerSpec, Mode, ModelParams, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use LayerSpec::*;

pub fn random_input(spec: &NetworkSpec, batch: usize, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = batch * spec.input_len();
    let data = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    let [c, h, w] = spec.input;
    Tensor::new(vec![batch, c, h, w], data).unwrap()
}

/// Random parameters with non-zero biases, so every path carries signal.
pub fn random_params(spec: &NetworkSpec, keep: f64, seed: u64) -> ModelParams<f64> {
    let mut p = ModelParams::<f64>::init_he(spec, keep, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xb1a5);
    for l in p.layers.iter_mut() {
        l.biases.iter_mut().for_each(|b| *b = rng.gen_range(-0.1..0.1));
    }
    p
}

/// Central differences with step `eps` on up to `probes` parameters per
/// layer; returns the worst relative error. Gradients under 1e-6 in both
/// estimates are compared against that absolute floor instead.
pub fn gradient_check(spec: &NetworkSpec, params: &ModelParams<f64>, x: &Tensor<f64>, labels: &[usize], probes: usize, eps: f64) -> f64 {
    let seed = 17;
    let analytic = backward(spec, params, x, labels, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst: f64 = 0.0;
    for (li, layer) in params.layers.iter().enumerate() {
        let total = layer.weights.len() + layer.biases.len();
        if total == 0 {
            continue;
        }
        let picks: Vec<usize> = if total <= probes {
            (0..total).collect()
        } else {
            (0..probes).map(|_| rng.gen_range(0..total)).collect()
        };
        for k in picks {
            let mut plus = params.clone();
            let mut minus = params.clone();
            let (a, slot_p, slot_m) = if k < layer.weights.len() {
                (analytic.layers[li].weights[k], &mut plus.layers[li].weights[k], &mut minus.layers[li].weights[k])
            } else {
                let j = k - layer.weights.len();
                (analytic.layers[li].biases[j], &mut plus.layers[li].biases[j], &mut minus.layers[li].biases[j])
            };
            *slot_p += eps;
            *slot_m -= eps;
            let lp = loss(spec, &plus, x, labels, Mode::Train, seed).unwrap();
            let lm = loss(spec, &minus, x, labels, Mode::Train, seed).unwrap();
            let numeric = (lp - lm) / (2.0 * eps);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Step for networks small enough that a 1e-3 nudge crosses no ReLU or
/// max-pool switch point.
pub const STEP: f64 = 1e-3;
/// Step for wide activation maps, where a 1e-3 nudge to an early weight moves
/// thousands of pre-activations and some of them straddle a kink.
pub const FINE_STEP: f64 = 1e-6;

/// Worst relative error over 100 probes per layer on a batch of three.
pub fn worst_error(case: &GradCase) -> f64 {
    let params = random_params(&case.spec, case.keep, case.seed);
    let x = random_input(&case.spec, 3, case.seed + 1);
    gradient_check(&case.spec, &params, &x, &[0, 1, 1], 100, case.eps)
}

pub struct GradCase {
    pub name: &'static str,
    pub spec: NetworkSpec,
    pub keep: f64,
    pub seed: u64,
    pub eps: f64,
}

/// One network per layer type, plus the composed reference network.
pub fn cases() -> Vec<GradCase> {
    vec![
        GradCase {
            name: "tiny_network",
            spec: NetworkSpec {
                input: [1, 8, 8],
                layers: vec![
                    Conv { filters: 2, kernel: 3, stride: 1 },
                    Relu,
                    MaxPool { size: 2, stride: 2 },
                    Dense { units: 2, drop_connect: false },
                    Softmax,
                ],
            },
            keep: 1.0,
            seed: 1,
            eps: STEP,
        },
        GradCase {
            name: "conv_strided",
            spec: NetworkSpec {
                input: [2, 9, 9],
                layers: vec![Conv { filters: 3, kernel: 3, stride: 2 }, Dense { units: 2, drop_connect: false }, Softmax],
            },
            keep: 1.0,
            seed: 2,
            eps: STEP,
        },
        GradCase {
            name: "locally_connected",
            spec: NetworkSpec {
                input: [2, 5, 5],
                layers: vec![LocallyConnected { maps: 3, kernel: 3 }, Dense { units: 2, drop_connect: false }, Softmax],
            },
            keep: 1.0,
            seed: 3,
            eps: STEP,
        },
        GradCase {
            name: "relu_and_pool",
            spec: NetworkSpec {
                input: [2, 6, 6],
                layers: vec![
                    Conv { filters: 2, kernel: 1, stride: 1 },
                    Relu,
                    MaxPool { size: 3, stride: 1 },
                    Dense { units: 2, drop_connect: false },
                    Softmax,
                ],
            },
            keep: 1.0,
            seed: 4,
            eps: FINE_STEP,
        },
        GradCase {
            name: "drop_connect",
            spec: NetworkSpec {
                input: [1, 4, 4],
                layers: vec![
                    Dense { units: 6, drop_connect: true },
                    Relu,
                    Dense { units: 2, drop_connect: false },
                    Softmax,
                ],
            },
            keep: 0.5,
            seed: 5,
            eps: STEP,
        },
        GradCase {
            name: "reference_network",
            spec: NetworkSpec::reference(),
            keep: 0.5,
            seed: 6,
            eps: FINE_STEP,
        },
    ]
}

