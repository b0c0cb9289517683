//! Quantized CNN graphs: Dense, Conv2d, ReLU and Scale layers over a CHW
//! tensor, with an exact integer oracle and a garbled counterpart.

mod container;
mod garbled;
mod linear;

pub use container::{read_labels, write_labels, CONTAINER_CHECK, CONTAINER_MAGIC, CONTAINER_VERSION, LABELS_MAGIC};
pub use garbled::{
    decode_output, encode_input, eval_model, garble_model, input_candidates, input_choices,
    tensors_from_labels, GarbledLayer, GarbledModel, ModelSecrets,
};
pub use linear::{conv_as_matmul, conv_output_dim, direct_conv, LinearMap, PAD};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::garble::GarbleError;
use crate::rns::{scale_signed_plain, RnsBase, RnsError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("layer {layer}: value {value} outside the signed range of the base")]
    RangeOverflow { layer: usize, value: i128 },
    #[error("scale factor {0} cannot be realized in this base")]
    UnrealizableScale(u64),
    #[error("unsupported format version {got}, expected {expected}")]
    VersionMismatch { expected: u16, got: u16 },
    #[error("malformed container: {0}")]
    Malformed(String),
    #[error(transparent)]
    Rns(#[from] RnsError),
    #[error(transparent)]
    Garble(#[from] GarbleError),
}

/// Channels, height, width.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl Shape {
    pub fn new(channels: usize, height: usize, width: usize) -> Self {
        Shape {
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerKind {
    /// Flattens its input and produces `outputs` values.
    Dense { outputs: usize },
    /// Weights in OIHW order.
    Conv2d {
        in_channels: usize,
        out_channels: usize,
        filter: usize,
        stride: usize,
        #[serde(default)]
        padding: usize,
    },
    Relu,
    /// Divides by `factor`, `steps` times in a row.
    Scale {
        factor: u64,
        #[serde(default = "one")]
        steps: u32,
    },
}

fn one() -> u32 {
    1
}

impl LayerKind {
    pub fn conv(in_channels: usize, out_channels: usize, filter: usize, stride: usize, padding: usize) -> Self {
        LayerKind::Conv2d {
            in_channels,
            out_channels,
            filter,
            stride,
            padding,
        }
    }

    pub fn is_linear(&self) -> bool {
        matches!(self, LayerKind::Dense { .. } | LayerKind::Conv2d { .. })
    }

    pub fn output_shape(&self, input: Shape) -> Result<Shape, NnError> {
        match *self {
            LayerKind::Dense { outputs } => Ok(Shape::new(outputs, 1, 1)),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                filter,
                stride,
                padding,
            } => {
                if input.channels != in_channels {
                    return Err(NnError::ShapeMismatch(format!(
                        "convolution expects {in_channels} channels, got {}",
                        input.channels
                    )));
                }
                match (
                    conv_output_dim(input.height, filter, stride, padding),
                    conv_output_dim(input.width, filter, stride, padding),
                ) {
                    (Some(h), Some(w)) => Ok(Shape::new(out_channels, h, w)),
                    _ => Err(NnError::ShapeMismatch(format!(
                        "filter {filter} does not fit {}x{}",
                        input.height, input.width
                    ))),
                }
            }
            LayerKind::Relu | LayerKind::Scale { .. } => Ok(input),
        }
    }

    /// Number of weights for a linear layer on `input`.
    pub fn weight_count(&self, input: Shape) -> usize {
        match *self {
            LayerKind::Dense { outputs } => outputs * input.len(),
            LayerKind::Conv2d {
                in_channels,
                out_channels,
                filter,
                ..
            } => out_channels * in_channels * filter * filter,
            _ => 0,
        }
    }

    pub fn out_channels(&self) -> usize {
        match *self {
            LayerKind::Dense { outputs } => outputs,
            LayerKind::Conv2d { out_channels, .. } => out_channels,
            _ => 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layer {
    #[serde(flatten)]
    pub kind: LayerKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weights: Vec<i64>,
    /// One entry per output channel.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub bias: Vec<i64>,
}

impl Layer {
    pub fn new(kind: LayerKind) -> Self {
        Layer {
            kind,
            weights: Vec::new(),
            bias: Vec::new(),
        }
    }

    pub fn linear(kind: LayerKind, weights: Vec<i64>, bias: Vec<i64>) -> Self {
        Layer { kind, weights, bias }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Network {
    pub input: Shape,
    pub layers: Vec<Layer>,
}

impl Network {
    /// Shapes before the first layer and after each layer; checks parameter sizes.
    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        let mut shapes = vec![self.input];
        for (i, layer) in self.layers.iter().enumerate() {
            let cur = *shapes.last().unwrap();
            if layer.kind.is_linear() {
                let want = layer.kind.weight_count(cur);
                if layer.weights.len() != want {
                    return Err(NnError::ShapeMismatch(format!(
                        "layer {i}: {} weights, expected {want}",
                        layer.weights.len()
                    )));
                }
                if layer.bias.len() != layer.kind.out_channels() {
                    return Err(NnError::ShapeMismatch(format!(
                        "layer {i}: {} biases, expected {}",
                        layer.bias.len(),
                        layer.kind.out_channels()
                    )));
                }
            }
            shapes.push(layer.kind.output_shape(cur)?);
        }
        Ok(shapes)
    }

    pub fn output_shape(&self) -> Result<Shape, NnError> {
        Ok(*self.shapes()?.last().unwrap())
    }

    /// Checks that every Scale layer is realizable in `base`.
    pub fn check_scales(&self, base: &RnsBase) -> Result<(), NnError> {
        for layer in &self.layers {
            if let LayerKind::Scale { factor, .. } = layer.kind {
                base.scale_indices(factor)
                    .map_err(|_| NnError::UnrealizableScale(factor))?;
            }
        }
        Ok(())
    }
}

fn check_range(base: &RnsBase, layer: usize, values: &[i128]) -> Result<(), NnError> {
    let (lo, hi) = base.signed_range();
    match values.iter().find(|&&v| v < lo || v > hi) {
        Some(&value) => Err(NnError::RangeOverflow { layer, value }),
        None => Ok(()),
    }
}

/// Exact integer inference; the oracle for the garbled path.
///
/// Values must stay inside the signed range of `base` after every layer,
/// otherwise the ring arithmetic of the garbled model would wrap.
pub fn plaintext_infer(net: &Network, base: &RnsBase, input: &[i64]) -> Result<Vec<i64>, NnError> {
    let shapes = net.shapes()?;
    if input.len() != net.input.len() {
        return Err(NnError::ShapeMismatch(format!(
            "input has {} values, expected {}",
            input.len(),
            net.input.len()
        )));
    }
    net.check_scales(base)?;
    let mut x: Vec<i128> = input.iter().map(|&v| v as i128).collect();
    check_range(base, 0, &x)?;
    for (i, layer) in net.layers.iter().enumerate() {
        x = match layer.kind {
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. } => {
                let map = LinearMap::for_layer(&layer.kind, shapes[i])?;
                let xi: Vec<i64> = x.iter().map(|&v| v as i64).collect();
                let mut y = map.apply_i128(&layer.weights, &xi);
                for (o, chunk) in y.chunks_mut(map.rows).enumerate() {
                    chunk.iter_mut().for_each(|v| *v += layer.bias[o] as i128);
                }
                y
            }
            LayerKind::Relu => x.into_iter().map(|v| v.max(0)).collect(),
            LayerKind::Scale { factor, steps } => x
                .into_iter()
                .map(|mut v| {
                    for _ in 0..steps {
                        v = scale_signed_plain(v, factor, base)?;
                    }
                    Ok(v)
                })
                .collect::<Result<_, RnsError>>()?,
        };
        check_range(base, i, &x)?;
    }
    Ok(x.into_iter().map(|v| v as i64).collect())
}

/// Layer sequence of the smaller CIFAR-10 model, with same-padding on 3x3 filters.
pub fn model_f() -> Vec<LayerKind> {
    use LayerKind as L;
    vec![
        L::conv(3, 32, 3, 1, 1),
        L::Relu,
        L::conv(32, 32, 3, 1, 1),
        L::Relu,
        L::conv(32, 32, 2, 2, 0),
        L::conv(32, 64, 3, 1, 1),
        L::Relu,
        L::conv(64, 64, 3, 1, 1),
        L::Relu,
        L::conv(64, 64, 2, 2, 0),
        L::conv(64, 128, 3, 1, 1),
        L::Relu,
        L::conv(128, 128, 3, 1, 1),
        L::Relu,
        L::Dense { outputs: 10 },
    ]
}

/// Layer sequence of the larger CIFAR-10 model, with same-padding on 3x3 filters.
pub fn model_big_f() -> Vec<LayerKind> {
    use LayerKind as L;
    vec![
        L::conv(3, 64, 3, 1, 1),
        L::Relu,
        L::conv(64, 64, 3, 1, 1),
        L::Relu,
        L::conv(64, 64, 2, 2, 0),
        L::conv(64, 64, 3, 1, 1),
        L::Relu,
        L::conv(64, 64, 3, 1, 1),
        L::Relu,
        L::conv(64, 64, 2, 2, 0),
        L::conv(64, 64, 3, 1, 1),
        L::Relu,
        L::conv(64, 64, 1, 1, 0),
        L::Relu,
        L::conv(64, 16, 1, 1, 0),
        L::Relu,
        L::Dense { outputs: 10 },
    ]
}

/// Inserts `Scale { factor, steps }` after every linear layer.
pub fn with_scaling(kinds: &[LayerKind], factor: u64, steps: u32) -> Vec<LayerKind> {
    let mut out = Vec::with_capacity(kinds.len() * 2);
    for k in kinds {
        out.push(k.clone());
        if k.is_linear() {
            out.push(LayerKind::Scale { factor, steps });
        }
    }
    out
}
