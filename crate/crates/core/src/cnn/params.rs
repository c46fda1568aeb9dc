//! Network parameters, initialisation and the single-file model format.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::NetworkSpec;
use super::tensor::Elem;
use crate::{child_seed, seed, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T> {
    pub weights: Vec<T>,
    pub biases: Vec<T>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub seed: u64,
}

/// Weights and biases of every layer in declaration order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T> {
    pub layers: Vec<LayerParams<T>>,
    /// DropConnect keep probability; inference scales masked layers by it.
    pub keep_prob: f64,
    pub meta: TrainMeta,
}

impl<T: Elem> ModelParams<T> {
    pub fn zeros(spec: &NetworkSpec, keep_prob: f64) -> Result<Self> {
        Ok(Self {
            layers: spec
                .param_sizes()?
                .into_iter()
                .map(|(w, b)| LayerParams {
                    weights: vec![T::zero(); w],
                    biases: vec![T::zero(); b],
                })
                .collect(),
            keep_prob,
            meta: TrainMeta::default(),
        })
    }

    /// He-normal weights (std = sqrt(2 / fan_in)) and zero biases.
    pub fn init_he(spec: &NetworkSpec, keep_prob: f64, seed: u64) -> Result<Self> {
        let shapes = spec.shapes()?;
        let mut p = Self::zeros(spec, keep_prob)?;
        p.meta.seed = seed;
        for (i, layer) in p.layers.iter_mut().enumerate() {
            if layer.weights.is_empty() {
                continue;
            }
            let std = (2.0 / spec.fan_in(i, &shapes) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("finite std");
            let mut rng = seed::rng(child_seed!(seed, "init", i));
            for w in layer.weights.iter_mut() {
                *w = T::from_f64_lossy(normal.sample(&mut rng));
            }
        }
        Ok(p)
    }

    pub fn cast<U: Elem>(&self) -> ModelParams<U> {
        let conv = |v: &[T]| v.iter().map(|x| U::from_f64_lossy(x.as_f64())).collect();
        ModelParams {
            layers: self
                .layers
                .iter()
                .map(|l| LayerParams {
                    weights: conv(&l.weights),
                    biases: conv(&l.biases),
                })
                .collect(),
            keep_prob: self.keep_prob,
            meta: self.meta.clone(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.biases).all(|x| x.is_finite()))
    }

    fn check_shapes(&self, spec: &NetworkSpec) -> Result<()> {
        let sizes = spec.param_sizes()?;
        let got: Vec<(usize, usize)> = self.layers.iter().map(|l| (l.weights.len(), l.biases.len())).collect();
        if got != sizes {
            return Err(Error::ShapeMismatch {
                expected: format!("{sizes:?}"),
                got: format!("{got:?}"),
            });
        }
        Ok(())
    }

    pub(crate) fn validate(&self, spec: &NetworkSpec) -> Result<()> {
        self.check_shapes(spec)?;
        if !(self.keep_prob > 0.0 && self.keep_prob <= 1.0) {
            return Err(Error::InvalidConfig(format!("keep probability {} not in (0, 1]", self.keep_prob)));
        }
        Ok(())
    }
}

const MAGIC: &[u8; 8] = b"CASCNN01";

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    shapes: Vec<(usize, usize)>,
    keep_prob: f64,
    meta: TrainMeta,
    #[serde(default)]
    config_hash: Option<String>,
}

/// A model file's contents.
#[derive(Debug, Clone, PartialEq)]
pub struct SavedModel {
    pub spec: NetworkSpec,
    pub params: ModelParams<f32>,
    /// Hash of the configuration that produced the model, if recorded.
    pub config_hash: Option<String>,
}

/// Writes magic, a `u32` header length, the JSON header, then every layer's
/// weights and biases as little-endian `f32`.
pub fn save_model(path: impl AsRef<Path>, spec: &NetworkSpec, params: &ModelParams<f32>, config_hash: Option<&str>) -> Result<()> {
    params.check_shapes(spec)?;
    let header = serde_json::to_vec(&Header {
        spec: spec.clone(),
        shapes: spec.param_sizes()?,
        keep_prob: params.keep_prob,
        meta: params.meta.clone(),
        config_hash: config_hash.map(str::to_string),
    })?;
    let mut out = Vec::with_capacity(12 + header.len() + 4 * params.param_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    for l in &params.layers {
        for x in l.weights.iter().chain(&l.biases) {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    fs::File::create(path)?.write_all(&out)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<SavedModel> {
    let mut bytes = Vec::new();
    fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = |m: &str| Error::MalformedModel(m.to_string());
    if bytes.len() < 12 || &bytes[..8] != MAGIC {
        return Err(bad("missing magic bytes"));
    }
    let hlen = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let body = bytes.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body)?;
    if header.shapes != header.spec.param_sizes()? {
        return Err(bad("header shapes disagree with the network spec"));
    }
    let payload = &bytes[12 + hlen..];
    let total: usize = header.shapes.iter().map(|(w, b)| w + b).sum();
    if payload.len() != 4 * total {
        return Err(bad(&format!("payload has {} bytes, expected {}", payload.len(), 4 * total)));
    }
    let mut values = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
    let layers = header
        .shapes
        .iter()
        .map(|&(w, b)| LayerParams {
            weights: values.by_ref().take(w).collect(),
            biases: values.by_ref().take(b).collect(),
        })
        .collect();
    Ok(SavedModel {
        spec: header.spec,
        params: ModelParams {
            layers,
            keep_prob: header.keep_prob,
            meta: header.meta,
        },
        config_hash: header.config_hash,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let spec = NetworkSpec::reference();
        let mut p = ModelParams::<f32>::init_he(&spec, 0.5, 9).unwrap();
        p.layers[0].weights[0] = f32::MIN_POSITIVE / 3.0;
        p.meta = TrainMeta {
            epochs_run: 3,
            final_loss: 0.1234567890123,
            seed: 9,
        };
        let path = dir.path().join("m.model");
        save_model(&path, &spec, &p, Some("abc")).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.spec, spec);
        assert_eq!(back.config_hash.as_deref(), Some("abc"));
        assert_eq!(back.params.meta, p.meta);
        for (a, b) in back.params.layers.iter().zip(&p.layers) {
            let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a.weights), bits(&b.weights));
            assert_eq!(bits(&a.biases), bits(&b.biases));
        }
    }

    #[test]
    fn corrupt_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.model");
        fs::write(&path, b"nonsense").unwrap();
        assert!(matches!(load_model(&path), Err(Error::MalformedModel(_))));
        let spec = NetworkSpec::reference();
        save_model(&path, &spec, &ModelParams::zeros(&spec, 0.5).unwrap(), None).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        fs::write(&path, bytes).unwrap();
        assert!(matches!(load_model(&path), Err(Error::MalformedModel(_))));
    }

    #[test]
    fn he_init_statistics() {
        let spec = NetworkSpec::reference();
        let p = ModelParams::<f64>::init_he(&spec, 0.5, 1).unwrap();
        let w = &p.layers[3].weights;
        let var = w.iter().map(|x| x * x).sum::<f64>() / w.len() as f64;
        let expect = 2.0 / 400.0;
        assert!((var / expect - 1.0).abs() < 0.05, "variance {var} vs {expect}");
        assert!(p.layers.iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
    }
}
