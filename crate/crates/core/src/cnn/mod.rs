//! A small convolutional network written from scratch: convolution, ReLU,
//! max pooling, locally connected, DropConnect dense and softmax layers,
//! trained with minibatch SGD.
//!
//! Everything is generic over [`Elem`], so the single-precision training code
//! path can be re-run in double precision for gradient checking.

mod engine;
mod params;
mod spec;
mod tensor;
mod train;

pub use engine::Mode;
pub use params::{load_model, save_model, LayerParams, ModelParams, SavedModel, TrainMeta};
pub use spec::{LayerSpec, NetworkSpec, CLASSES};
pub use tensor::{Elem, Tensor};
pub use train::{train_sgd, train_sgd_with, EpochStats, TrainConfig};

use engine::{cross_entropy, Plan};

use crate::views::Patch;
use crate::{child_seed, par, Error, Result};

/// Class index of a true lesion; the other class is a false positive.
pub const TRUE_CLASS: usize = 1;

/// Examples per gradient chunk. Chunks may run in parallel; their partial
/// sums are always reduced in chunk order.
const CHUNK: usize = 8;

/// Loss and parameter gradients for one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    /// Mean cross-entropy over the batch.
    pub loss: f64,
    pub layers: Vec<LayerParams<T>>,
}

/// Seed of the DropConnect mask used for example `k` of a batch.
fn mask_seed(seed: u64, k: usize) -> u64 {
    child_seed!(seed, "dropconnect", k)
}

fn split_batch<'b, T: Elem>(spec: &NetworkSpec, batch: &'b Tensor<T>) -> Result<Vec<&'b [T]>> {
    let s = batch.shape();
    let ok = s.len() == 4 && s[1..] == spec.input[..];
    if !ok {
        return Err(Error::ShapeMismatch {
            expected: format!("(B, {}, {}, {})", spec.input[0], spec.input[1], spec.input[2]),
            got: format!("{s:?}"),
        });
    }
    Ok((0..s[0]).map(|i| batch.row(i)).collect())
}

/// Class probabilities, shape `(B, 2)`.
pub fn forward<T: Elem>(spec: &NetworkSpec, params: &ModelParams<T>, batch: &Tensor<T>, mode: Mode, seed: u64) -> Result<Tensor<T>> {
    let plan = Plan::new(spec, params)?;
    let rows = split_batch(spec, batch)?;
    let idx: Vec<usize> = (0..rows.len()).collect();
    let probs = par::try_map(&idx, |&k| plan.forward(rows[k], mode, mask_seed(seed, k), None).map(|t| t.probs))?;
    Tensor::new(vec![rows.len(), CLASSES], probs.concat())
}

/// Every layer's output for a single example, in layer order.
pub fn forward_activations<T: Elem>(spec: &NetworkSpec, params: &ModelParams<T>, example: &[T], mode: Mode, seed: u64) -> Result<Vec<Vec<T>>> {
    let plan = Plan::new(spec, params)?;
    let mut out = Vec::new();
    plan.forward(example, mode, mask_seed(seed, 0), Some(&mut out))?;
    Ok(out)
}

fn check_labels(n: usize, labels: &[usize]) -> Result<()> {
    if labels.len() != n || labels.iter().any(|&l| l >= CLASSES) {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} labels in 0..{CLASSES}"),
            got: format!("{labels:?}"),
        });
    }
    if n == 0 {
        return Err(Error::Empty("batch"));
    }
    Ok(())
}

/// Mean cross-entropy of a batch. In train mode the DropConnect masks are
/// the same ones [`backward`] uses for the same seed.
pub fn loss<T: Elem>(spec: &NetworkSpec, params: &ModelParams<T>, batch: &Tensor<T>, labels: &[usize], mode: Mode, seed: u64) -> Result<f64> {
    let plan = Plan::new(spec, params)?;
    let rows = split_batch(spec, batch)?;
    check_labels(rows.len(), labels)?;
    let idx: Vec<usize> = (0..rows.len()).collect();
    let losses = par::try_map(&idx, |&k| {
        plan.forward(rows[k], mode, mask_seed(seed, k), None)
            .map(|t| cross_entropy(&t.logits, labels[k]))
    })?;
    Ok(losses.iter().sum::<f64>() / rows.len() as f64)
}

/// Exact gradients of the mean train-mode cross-entropy.
pub fn backward<T: Elem>(spec: &NetworkSpec, params: &ModelParams<T>, batch: &Tensor<T>, labels: &[usize], seed: u64) -> Result<Gradients<T>> {
    let plan = Plan::new(spec, params)?;
    let rows = split_batch(spec, batch)?;
    batch_gradients(&plan, &rows, labels, seed)
}

pub(crate) fn batch_gradients<T: Elem>(plan: &Plan<'_, T>, rows: &[&[T]], labels: &[usize], seed: u64) -> Result<Gradients<T>> {
    check_labels(rows.len(), labels)?;
    let b = rows.len();
    let scale = T::from_f64_lossy(1.0 / b as f64);
    let chunks: Vec<usize> = (0..b.div_ceil(CHUNK)).collect();
    let zeros = || -> Result<Vec<LayerParams<T>>> { Ok(ModelParams::<T>::zeros(plan.spec, plan.params.keep_prob)?.layers) };
    let parts = par::try_map(&chunks, |&ci| -> Result<(f64, Vec<LayerParams<T>>)> {
        let mut g = zeros()?;
        let mut loss = 0.0;
        for k in ci * CHUNK..((ci + 1) * CHUNK).min(b) {
            let trace = plan.forward(rows[k], Mode::Train, mask_seed(seed, k), None)?;
            loss += cross_entropy(&trace.logits, labels[k]);
            plan.backward(&trace, labels[k], scale, &mut g);
        }
        Ok((loss, g))
    })?;
    let mut total = zeros()?;
    let mut loss = 0.0;
    for (l, g) in parts {
        loss += l;
        for (t, p) in total.iter_mut().zip(g) {
            t.weights.iter_mut().zip(p.weights).for_each(|(a, b)| *a = *a + b);
            t.biases.iter_mut().zip(p.biases).for_each(|(a, b)| *a = *a + b);
        }
    }
    Ok(Gradients {
        loss: loss / b as f64,
        layers: total,
    })
}

/// Eval-mode probability of the true-lesion class for each input.
pub fn predict_batch(spec: &NetworkSpec, params: &ModelParams<f32>, inputs: &[&[f32]]) -> Result<Vec<f64>> {
    let plan = Plan::new(spec, params)?;
    par::try_map(inputs, |x| plan.forward(x, Mode::Eval, 0, None).map(|t| f64::from(t.probs[TRUE_CLASS])))
}

/// Eval-mode probability that `patch` shows a true lesion.
pub fn predict_view(spec: &NetworkSpec, params: &ModelParams<f32>, patch: &Patch) -> Result<f64> {
    Ok(predict_batch(spec, params, &[&patch.pixels])?[0])
}
