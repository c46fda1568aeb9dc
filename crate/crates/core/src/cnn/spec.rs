//! Network architecture description and shape inference.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    /// Valid (unpadded) convolution with shared weights.
    Conv { filters: usize, kernel: usize, stride: usize },
    Relu,
    MaxPool { size: usize, stride: usize },
    /// Valid, stride-1 convolution with untied weights at every position.
    LocallyConnected { maps: usize, kernel: usize },
    /// Fully connected over the flattened input; `drop_connect` masks its
    /// weights during training.
    Dense { units: usize, drop_connect: bool },
    /// Final class-probability layer.
    Softmax,
}

/// Input shape (channels, height, width) plus an ordered layer list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// Number of output classes.
pub const CLASSES: usize = 2;

impl NetworkSpec {
    /// conv 16@5x5, pool, conv 32@5x5, pool, locally connected 16@3x3,
    /// DropConnect dense 64, dense 2, softmax; for 3x32x32 inputs.
    pub fn reference() -> Self {
        use LayerSpec::*;
        Self {
            input: [3, 32, 32],
            layers: vec![
                Conv { filters: 16, kernel: 5, stride: 1 },
                Relu,
                MaxPool { size: 2, stride: 2 },
                Conv { filters: 32, kernel: 5, stride: 1 },
                Relu,
                MaxPool { size: 2, stride: 2 },
                LocallyConnected { maps: 16, kernel: 3 },
                Relu,
                Dense { units: 64, drop_connect: true },
                Relu,
                Dense { units: CLASSES, drop_connect: false },
                Softmax,
            ],
        }
    }

    /// Activation shape before the first layer and after every layer, as
    /// (channels, height, width); dense outputs are `(units, 1, 1)`.
    pub fn shapes(&self) -> Result<Vec<[usize; 3]>> {
        let bad = |i: usize, m: String| {
            Err(Error::ShapeMismatch {
                expected: format!("compatible input for layer {i}"),
                got: m,
            })
        };
        if self.input.contains(&0) {
            return bad(0, format!("input shape {:?}", self.input));
        }
        let mut shapes = vec![self.input];
        for (i, layer) in self.layers.iter().enumerate() {
            let [c, h, w] = *shapes.last().expect("non-empty");
            let next = match *layer {
                LayerSpec::Conv { filters, kernel, stride } => {
                    if filters == 0 || kernel == 0 || stride == 0 || kernel > h || kernel > w {
                        return bad(i, format!("conv {filters}@{kernel}x{kernel}/{stride} on {c}x{h}x{w}"));
                    }
                    [filters, (h - kernel) / stride + 1, (w - kernel) / stride + 1]
                }
                LayerSpec::Relu => [c, h, w],
                LayerSpec::MaxPool { size, stride } => {
                    if size == 0 || stride == 0 || size > h || size > w {
                        return bad(i, format!("pool {size}/{stride} on {c}x{h}x{w}"));
                    }
                    [c, (h - size) / stride + 1, (w - size) / stride + 1]
                }
                LayerSpec::LocallyConnected { maps, kernel } => {
                    if maps == 0 || kernel == 0 || kernel > h || kernel > w {
                        return bad(i, format!("locally connected {maps}@{kernel}x{kernel} on {c}x{h}x{w}"));
                    }
                    [maps, h - kernel + 1, w - kernel + 1]
                }
                LayerSpec::Dense { units, .. } => {
                    if units == 0 {
                        return bad(i, "dense layer with 0 units".into());
                    }
                    [units, 1, 1]
                }
                LayerSpec::Softmax => {
                    if i + 1 != self.layers.len() || c * h * w != CLASSES {
                        return bad(i, format!("softmax must be last and see {CLASSES} values, got {c}x{h}x{w}"));
                    }
                    [c, h, w]
                }
            };
            shapes.push(next);
        }
        if self.layers.last() != Some(&LayerSpec::Softmax) {
            return bad(self.layers.len(), "network must end in softmax".into());
        }
        Ok(shapes)
    }

    /// `(weight count, bias count)` per layer; zero for parameter-free layers.
    pub fn param_sizes(&self) -> Result<Vec<(usize, usize)>> {
        let shapes = self.shapes()?;
        Ok(self
            .layers
            .iter()
            .enumerate()
            .map(|(i, layer)| {
                let [c, h, w] = shapes[i];
                let [oc, oh, ow] = shapes[i + 1];
                match *layer {
                    LayerSpec::Conv { filters, kernel, .. } => (filters * c * kernel * kernel, filters),
                    LayerSpec::LocallyConnected { maps, kernel } => (oh * ow * maps * c * kernel * kernel, oc * oh * ow),
                    LayerSpec::Dense { units, .. } => (units * c * h * w, units),
                    _ => (0, 0),
                }
            })
            .collect())
    }

    /// Number of inputs feeding one output of each layer (for initialisation).
    pub(crate) fn fan_in(&self, i: usize, shapes: &[[usize; 3]]) -> usize {
        let [c, h, w] = shapes[i];
        match self.layers[i] {
            LayerSpec::Conv { kernel, .. } | LayerSpec::LocallyConnected { kernel, .. } => c * kernel * kernel,
            LayerSpec::Dense { .. } => c * h * w,
            _ => 0,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input.iter().product()
    }
}
