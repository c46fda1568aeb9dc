//! Per-example forward and backward passes with cached intermediate values.

use rand::Rng;

use super::params::{LayerParams, ModelParams};
use super::spec::{LayerSpec, NetworkSpec};
use super::tensor::Elem;
use crate::seed;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// DropConnect layers sample a weight mask per example.
    Train,
    /// DropConnect layers use the full weights scaled by the keep probability.
    Eval,
}

pub(crate) enum Cache<T> {
    Conv { cols: Vec<T> },
    Relu { out: Vec<T> },
    Pool { argmax: Vec<u32> },
    Local { rows: Vec<T> },
    Dense { input: Vec<T>, mask: Option<Vec<bool>> },
    Softmax,
}

/// Output of one example's forward pass.
pub(crate) struct Trace<T> {
    pub logits: Vec<T>,
    pub probs: Vec<T>,
    pub caches: Vec<Cache<T>>,
}

/// A validated network ready to run.
pub(crate) struct Plan<'a, T> {
    pub spec: &'a NetworkSpec,
    pub shapes: Vec<[usize; 3]>,
    pub params: &'a ModelParams<T>,
}

impl<'a, T: Elem> Plan<'a, T> {
    pub fn new(spec: &'a NetworkSpec, params: &'a ModelParams<T>) -> Result<Self> {
        params.validate(spec)?;
        Ok(Self {
            spec,
            shapes: spec.shapes()?,
            params,
        })
    }

    /// Runs one example. With `record`, every layer output is pushed to it.
    pub fn forward(
        &self,
        x: &[T],
        mode: Mode,
        mask_seed: u64,
        mut record: Option<&mut Vec<Vec<T>>>,
    ) -> Result<Trace<T>> {
        if x.len() != self.spec.input_len() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?} = {} values", self.spec.input, self.spec.input_len()),
                got: format!("{} values", x.len()),
            });
        }
        let keep = self.params.keep_prob;
        let mut mask_rng = seed::rng(mask_seed);
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut act = x.to_vec();
        let mut logits = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            let [c, h, w] = self.shapes[i];
            let [oc, oh, ow] = self.shapes[i + 1];
            let p = &self.params.layers[i];
            let (next, cache) = match *layer {
                LayerSpec::Conv { kernel, stride, .. } => {
                    let cols = im2col(&act, [c, h, w], kernel, stride, [oh, ow]);
                    let r = c * kernel * kernel;
                    let n = oh * ow;
                    let mut out = vec![T::zero(); oc * n];
                    T::gemm(oc, r, n, T::one(), &p.weights, (r, 1), &cols, (n, 1), T::zero(), &mut out, (n, 1));
                    for (f, row) in out.chunks_exact_mut(n).enumerate() {
                        row.iter_mut().for_each(|v| *v = *v + p.biases[f]);
                    }
                    (out, Cache::Conv { cols })
                }
                LayerSpec::Relu => {
                    let out: Vec<T> = act.iter().map(|&v| v.max(T::zero())).collect();
                    (out.clone(), Cache::Relu { out })
                }
                LayerSpec::MaxPool { size, stride } => {
                    let (out, argmax) = max_pool(&act, [c, h, w], size, stride, [oh, ow]);
                    (out, Cache::Pool { argmax })
                }
                LayerSpec::LocallyConnected { kernel, .. } => {
                    let rows = im2rows(&act, [c, h, w], kernel, [oh, ow]);
                    let r = c * kernel * kernel;
                    let n = oh * ow;
                    let mut out = vec![T::zero(); oc * n];
                    for pos in 0..n {
                        let xr = &rows[pos * r..(pos + 1) * r];
                        for m in 0..oc {
                            let wr = &p.weights[(pos * oc + m) * r..(pos * oc + m + 1) * r];
                            out[m * n + pos] = dot(wr, xr) + p.biases[m * n + pos];
                        }
                    }
                    (out, Cache::Local { rows })
                }
                LayerSpec::Dense { units, drop_connect } => {
                    let inputs = act.len();
                    let mut out = vec![T::zero(); units];
                    let mask = if drop_connect && mode == Mode::Train {
                        let m: Vec<bool> = (0..units * inputs).map(|_| mask_rng.gen::<f64>() < keep).collect();
                        for (u, o) in out.iter_mut().enumerate() {
                            let wr = &p.weights[u * inputs..(u + 1) * inputs];
                            let mr = &m[u * inputs..(u + 1) * inputs];
                            let mut s = T::zero();
                            for ((&wv, &xv), &on) in wr.iter().zip(&act).zip(mr) {
                                if on {
                                    s = s + wv * xv;
                                }
                            }
                            *o = s + p.biases[u];
                        }
                        Some(m)
                    } else {
                        let scale = if drop_connect { T::from_f64_lossy(keep) } else { T::one() };
                        for (u, o) in out.iter_mut().enumerate() {
                            let s = dot(&p.weights[u * inputs..(u + 1) * inputs], &act);
                            *o = if drop_connect { scale * s } else { s } + p.biases[u];
                        }
                        None
                    };
                    (out, Cache::Dense { input: act, mask })
                }
                LayerSpec::Softmax => {
                    logits = act.clone();
                    (softmax(&act), Cache::Softmax)
                }
            };
            if next.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { layer: i });
            }
            if let Some(rec) = record.as_deref_mut() {
                rec.push(next.clone());
            }
            caches.push(cache);
            act = next;
        }
        Ok(Trace {
            logits,
            probs: act,
            caches,
        })
    }

    /// Accumulates `scale * d(cross-entropy)/d(params)` for one example.
    pub fn backward(&self, trace: &Trace<T>, label: usize, scale: T, grads: &mut [LayerParams<T>]) {
        let mut delta: Vec<T> = trace
            .probs
            .iter()
            .enumerate()
            .map(|(k, &p)| (if k == label { p - T::one() } else { p }) * scale)
            .collect();
        for i in (0..self.spec.layers.len()).rev() {
            let [c, h, w] = self.shapes[i];
            let [oc, oh, ow] = self.shapes[i + 1];
            let p = &self.params.layers[i];
            let g = &mut grads[i];
            let need_input = i > 0;
            delta = match (&self.spec.layers[i], &trace.caches[i]) {
                (LayerSpec::Softmax, Cache::Softmax) => delta,
                (LayerSpec::Conv { kernel, stride, .. }, Cache::Conv { cols }) => {
                    let r = c * kernel * kernel;
                    let n = oh * ow;
                    T::gemm(oc, n, r, T::one(), &delta, (n, 1), cols, (1, n), T::one(), &mut g.weights, (r, 1));
                    for (f, row) in delta.chunks_exact(n).enumerate() {
                        g.biases[f] = g.biases[f] + row.iter().fold(T::zero(), |a, &b| a + b);
                    }
                    if need_input {
                        let mut dcols = vec![T::zero(); r * n];
                        T::gemm(r, oc, n, T::one(), &p.weights, (1, r), &delta, (n, 1), T::zero(), &mut dcols, (n, 1));
                        col2im(&dcols, [c, h, w], *kernel, *stride, [oh, ow])
                    } else {
                        Vec::new()
                    }
                }
                (LayerSpec::Relu, Cache::Relu { out }) => delta
                    .iter()
                    .zip(out)
                    .map(|(&d, &o)| if o > T::zero() { d } else { T::zero() })
                    .collect(),
                (LayerSpec::MaxPool { .. }, Cache::Pool { argmax }) => max_pool_backward(&delta, argmax, c * h * w),
                (LayerSpec::LocallyConnected { kernel, .. }, Cache::Local { rows }) => {
                    let r = c * kernel * kernel;
                    let n = oh * ow;
                    let mut drows = vec![T::zero(); if need_input { n * r } else { 0 }];
                    for pos in 0..n {
                        let xr = &rows[pos * r..(pos + 1) * r];
                        for m in 0..oc {
                            let d = delta[m * n + pos];
                            let base = (pos * oc + m) * r;
                            g.biases[m * n + pos] = g.biases[m * n + pos] + d;
                            for (gw, &xv) in g.weights[base..base + r].iter_mut().zip(xr) {
                                *gw = *gw + d * xv;
                            }
                            if need_input {
                                for (dr, &wv) in drows[pos * r..(pos + 1) * r].iter_mut().zip(&p.weights[base..base + r]) {
                                    *dr = *dr + d * wv;
                                }
                            }
                        }
                    }
                    if need_input {
                        rows2im(&drows, [c, h, w], *kernel, [oh, ow])
                    } else {
                        Vec::new()
                    }
                }
                (LayerSpec::Dense { units, .. }, Cache::Dense { input, mask }) => {
                    let inputs = input.len();
                    let mut dx = vec![T::zero(); if need_input { inputs } else { 0 }];
                    for u in 0..*units {
                        let d = delta[u];
                        g.biases[u] = g.biases[u] + d;
                        let range = u * inputs..(u + 1) * inputs;
                        let on = |j: usize| mask.as_ref().is_none_or(|m| m[u * inputs + j]);
                        for (j, (gw, &xv)) in g.weights[range.clone()].iter_mut().zip(input).enumerate() {
                            if on(j) {
                                *gw = *gw + d * xv;
                            }
                        }
                        if need_input {
                            for (j, (dxj, &wv)) in dx.iter_mut().zip(&p.weights[range]).enumerate() {
                                if on(j) {
                                    *dxj = *dxj + d * wv;
                                }
                            }
                        }
                    }
                    dx
                }
                _ => unreachable!("cache kind always matches its layer"),
            };
        }
    }
}

fn dot<T: Elem>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub(crate) fn softmax<T: Elem>(z: &[T]) -> Vec<T> {
    let m = z.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let e: Vec<T> = z.iter().map(|&v| (v - m).exp()).collect();
    let s = e.iter().fold(T::zero(), |a, &b| a + b);
    e.into_iter().map(|v| v / s).collect()
}

/// Cross-entropy of `logits` against `label`, via log-sum-exp.
pub(crate) fn cross_entropy<T: Elem>(logits: &[T], label: usize) -> f64 {
    let z: Vec<f64> = logits.iter().map(|v| v.as_f64()).collect();
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    lse - z[label]
}

/// Column matrix `(c*k*k) x (oh*ow)` of every receptive field.
fn im2col<T: Elem>(x: &[T], [c, h, w]: [usize; 3], k: usize, s: usize, [oh, ow]: [usize; 2]) -> Vec<T> {
    let n = oh * ow;
    let mut cols = vec![T::zero(); c * k * k * n];
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let r = (ci * k + ki) * k + kj;
                let dst = &mut cols[r * n..(r + 1) * n];
                for oy in 0..oh {
                    let src = (ci * h + oy * s + ki) * w + kj;
                    for ox in 0..ow {
                        dst[oy * ow + ox] = x[src + ox * s];
                    }
                }
            }
        }
    }
    cols
}

fn col2im<T: Elem>(cols: &[T], [c, h, w]: [usize; 3], k: usize, s: usize, [oh, ow]: [usize; 2]) -> Vec<T> {
    let n = oh * ow;
    let mut x = vec![T::zero(); c * h * w];
    for ci in 0..c {
        for ki in 0..k {
            for kj in 0..k {
                let r = (ci * k + ki) * k + kj;
                let src = &cols[r * n..(r + 1) * n];
                for oy in 0..oh {
                    let base = (ci * h + oy * s + ki) * w + kj;
                    for ox in 0..ow {
                        x[base + ox * s] = x[base + ox * s] + src[oy * ow + ox];
                    }
                }
            }
        }
    }
    x
}

/// Row-per-position layout `(oh*ow) x (c*k*k)` for stride-1 fields.
fn im2rows<T: Elem>(x: &[T], [c, h, w]: [usize; 3], k: usize, [oh, ow]: [usize; 2]) -> Vec<T> {
    let r = c * k * k;
    let mut rows = vec![T::zero(); oh * ow * r];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut rows[(oy * ow + ox) * r..(oy * ow + ox + 1) * r];
            for ci in 0..c {
                for ki in 0..k {
                    for kj in 0..k {
                        dst[(ci * k + ki) * k + kj] = x[(ci * h + oy + ki) * w + ox + kj];
                    }
                }
            }
        }
    }
    rows
}

fn rows2im<T: Elem>(rows: &[T], [c, h, w]: [usize; 3], k: usize, [oh, ow]: [usize; 2]) -> Vec<T> {
    let r = c * k * k;
    let mut x = vec![T::zero(); c * h * w];
    for oy in 0..oh {
        for ox in 0..ow {
            let src = &rows[(oy * ow + ox) * r..(oy * ow + ox + 1) * r];
            for ci in 0..c {
                for ki in 0..k {
                    for kj in 0..k {
                        let idx = (ci * h + oy + ki) * w + ox + kj;
                        x[idx] = x[idx] + src[(ci * k + ki) * k + kj];
                    }
                }
            }
        }
    }
    x
}

/// Max pooling; ties go to the first maximum in row-major window order.
fn max_pool<T: Elem>(x: &[T], [c, h, w]: [usize; 3], size: usize, s: usize, [oh, ow]: [usize; 2]) -> (Vec<T>, Vec<u32>) {
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut argmax = Vec::with_capacity(c * oh * ow);
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = (T::neg_infinity(), 0usize);
                for ki in 0..size {
                    for kj in 0..size {
                        let idx = (ci * h + oy * s + ki) * w + ox * s + kj;
                        if x[idx] > best.0 || (ki == 0 && kj == 0) {
                            best = (x[idx], idx);
                        }
                    }
                }
                out.push(best.0);
                argmax.push(best.1 as u32);
            }
        }
    }
    (out, argmax)
}

/// Routes each pooled gradient to the input position that won the max.
fn max_pool_backward<T: Elem>(delta: &[T], argmax: &[u32], input_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); input_len];
    for (&d, &a) in delta.iter().zip(argmax) {
        dx[a as usize] = dx[a as usize] + d;
    }
    dx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn im2col_round_trip_is_adjoint() {
        // <im2col(x), y> == <x, col2im(y)> for any x, y
        let shape = [2, 5, 6];
        let x: Vec<f64> = (0..60).map(|i| (i as f64 * 0.37).sin()).collect();
        let cols = im2col(&x, shape, 3, 2, [2, 2]);
        let y: Vec<f64> = (0..cols.len()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(col2im(&y, shape, 3, 2, [2, 2])).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);

        let rows = im2rows(&x, shape, 2, [4, 5]);
        let y: Vec<f64> = (0..rows.len()).map(|i| (i as f64 * 0.23).cos()).collect();
        let lhs: f64 = rows.iter().zip(&y).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(rows2im(&y, shape, 2, [4, 5])).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn pool_picks_first_max() {
        let x = [1.0f64, 3.0, 3.0, 0.0];
        let (out, arg) = max_pool(&x, [1, 2, 2], 2, 2, [1, 1]);
        assert_eq!(out, vec![3.0]);
        assert_eq!(arg, vec![1]);
    }

    #[test]
    fn pool_gradient_goes_to_argmax_only() {
        let shape = [2, 6, 6];
        let x: Vec<f64> = (0..72).map(|i| ((i * 37 % 71) as f64).sin()).collect();
        // overlapping windows share inputs, so routed sums accumulate
        for (size, stride, out) in [(2, 2, [3, 3]), (3, 1, [4, 4])] {
            let (_, arg) = max_pool(&x, shape, size, stride, out);
            let delta: Vec<f64> = (0..arg.len()).map(|i| 0.5 + i as f64).collect();
            let dx = max_pool_backward(&delta, &arg, 72);
            let winners: std::collections::BTreeSet<usize> = arg.iter().map(|&a| a as usize).collect();
            for (i, &g) in dx.iter().enumerate() {
                if !winners.contains(&i) {
                    assert_eq!(g, 0.0);
                }
            }
            assert!((dx.iter().sum::<f64>() - delta.iter().sum::<f64>()).abs() < 1e-9);
        }
    }

    #[test]
    fn cross_entropy_is_stable() {
        assert!((cross_entropy(&[1000.0f64, 0.0], 0)).abs() < 1e-12);
        assert!((cross_entropy(&[1000.0f64, 0.0], 1) - 1000.0).abs() < 1e-9);
        let p = softmax(&[1000.0f32, 0.0]);
        assert_eq!(p, vec![1.0, 0.0]);
    }
}
