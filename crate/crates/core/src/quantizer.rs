//! Float to ring-integer quantization.
//!
//! SimpleQuant multiplies everything by a constant `alpha`. ScaleQuant
//! multiplies weights and inputs by `2^l`, biases by `2^(2l)` and divides
//! every linear layer's output by `2^l`. ScaleQuantPlus does the same with an
//! arbitrary factor `s` that is a product of base moduli, so the division is
//! a single scaling gadget. Rounding is half away from zero.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Layer, LayerKind, LinearMap, Network, NnError, Shape};
use crate::rns::{RnsBase, RnsError};

#[derive(Debug, Error)]
pub enum QuantError {
    #[error("quantization constant must be positive and finite, got {0}")]
    InvalidAlpha(f64),
    #[error("scale factor {0} is not a product of distinct base moduli")]
    InvalidScaleFactor(u64),
    #[error("scale 2^{0} cannot be realized in this base")]
    UnrealizableScale(u32),
    #[error("{what}: quantized value {value} outside the signed range [{lo}, {hi}]")]
    RangeOverflow {
        what: String,
        value: f64,
        lo: i128,
        hi: i128,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Rns(#[from] RnsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QuantError>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum Scheme {
    SimpleQuant { alpha: f64 },
    ScaleQuant { ell: u32 },
    ScaleQuantPlus { s: u64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantParams {
    #[serde(flatten)]
    pub scheme: Scheme,
    pub base: RnsBase,
}

impl QuantParams {
    pub fn new(scheme: Scheme, base: RnsBase) -> Result<Self> {
        let q = QuantParams { scheme, base };
        q.scale_layer()?;
        if let Scheme::SimpleQuant { alpha } = scheme {
            if !(alpha.is_finite() && alpha > 0.0) {
                return Err(QuantError::InvalidAlpha(alpha));
            }
        }
        Ok(q)
    }

    /// Factor applied to weights and inputs.
    pub fn value_factor(&self) -> f64 {
        match self.scheme {
            Scheme::SimpleQuant { alpha } => alpha,
            Scheme::ScaleQuant { ell } => 2f64.powi(ell as i32),
            Scheme::ScaleQuantPlus { s } => s as f64,
        }
    }

    /// Factor applied to biases, which meet the product of two scaled values.
    pub fn bias_factor(&self) -> f64 {
        match self.scheme {
            Scheme::SimpleQuant { alpha } => alpha,
            _ => self.value_factor() * self.value_factor(),
        }
    }

    /// The layer inserted after every linear layer, if any.
    ///
    /// ScaleQuant halves `l` times when the base has modulus 2 and otherwise
    /// divides once by `2^l` if that is a product of base moduli.
    pub fn scale_layer(&self) -> Result<Option<LayerKind>> {
        match self.scheme {
            Scheme::SimpleQuant { .. } => Ok(None),
            Scheme::ScaleQuant { ell } => {
                if ell == 0 || ell > 62 {
                    return Err(QuantError::UnrealizableScale(ell));
                }
                if self.base.index_of(2).is_some() {
                    Ok(Some(LayerKind::Scale { factor: 2, steps: ell }))
                } else if self.base.scale_indices(1 << ell).is_ok() {
                    Ok(Some(LayerKind::Scale {
                        factor: 1 << ell,
                        steps: 1,
                    }))
                } else {
                    Err(QuantError::UnrealizableScale(ell))
                }
            }
            Scheme::ScaleQuantPlus { s } => {
                self.base
                    .scale_indices(s)
                    .map_err(|_| QuantError::InvalidScaleFactor(s))?;
                Ok(Some(LayerKind::Scale { factor: s, steps: 1 }))
            }
        }
    }
}

/// `round(v * c)`, checked against the signed range of `base`.
pub fn quantize_value(v: f64, c: f64, base: &RnsBase) -> Result<i64> {
    let (lo, hi) = base.signed_range();
    let r = (v * c).round();
    if !r.is_finite() || r < lo as f64 || r > hi as f64 || r.abs() >= i64::MAX as f64 {
        return Err(QuantError::RangeOverflow {
            what: format!("value {v}"),
            value: r,
            lo,
            hi,
        });
    }
    Ok(r as i64)
}

pub fn simple_quant(values: &[f64], alpha: f64, base: &RnsBase) -> Result<Vec<i64>> {
    if !(alpha.is_finite() && alpha > 0.0) {
        return Err(QuantError::InvalidAlpha(alpha));
    }
    values.iter().map(|&v| quantize_value(v, alpha, base)).collect()
}

/// A floating-point layer; weights in the same layout as [`Layer`].
#[derive(Clone, Debug, PartialEq)]
pub struct RealLayer {
    pub kind: LayerKind,
    pub weights: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RealModel {
    pub input: Shape,
    pub layers: Vec<RealLayer>,
}

/// JSON side of a model file; weights live in a separate blob.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub input: Shape,
    pub layers: Vec<LayerKind>,
    /// Blob path relative to the manifest: per linear layer, weights then
    /// biases as little-endian `f32`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<String>,
}

impl RealModel {
    /// Builds a model from a manifest and its weight blob.
    pub fn from_parts(manifest: &Manifest, blob: &[u8]) -> Result<Self> {
        if !blob.len().is_multiple_of(4) {
            return Err(QuantError::Manifest("weight blob length is not a multiple of 4".into()));
        }
        let mut floats = blob
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()));
        let mut shape = manifest.input;
        let mut layers = Vec::with_capacity(manifest.layers.len());
        for kind in &manifest.layers {
            let (nw, nb) = if kind.is_linear() {
                (kind.weight_count(shape), kind.out_channels())
            } else {
                (0, 0)
            };
            let weights: Vec<f32> = floats.by_ref().take(nw).collect();
            let bias: Vec<f32> = floats.by_ref().take(nb).collect();
            if weights.len() != nw || bias.len() != nb {
                return Err(QuantError::Manifest("weight blob too short".into()));
            }
            layers.push(RealLayer {
                kind: kind.clone(),
                weights,
                bias,
            });
            shape = kind.output_shape(shape)?;
        }
        if floats.next().is_some() {
            return Err(QuantError::Manifest("weight blob too long".into()));
        }
        Ok(RealModel {
            input: manifest.input,
            layers,
        })
    }

    pub fn load(manifest_path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(manifest_path)?;
        let manifest: Manifest =
            serde_json::from_str(&text).map_err(|e| QuantError::Manifest(e.to_string()))?;
        let blob = match &manifest.weights {
            Some(rel) => {
                let dir = manifest_path.parent().unwrap_or(Path::new("."));
                std::fs::read(dir.join(rel))?
            }
            None => Vec::new(),
        };
        Self::from_parts(&manifest, &blob)
    }

    pub fn manifest(&self, weights: Option<String>) -> Manifest {
        Manifest {
            input: self.input,
            layers: self.layers.iter().map(|l| l.kind.clone()).collect(),
            weights,
        }
    }

    pub fn blob(&self) -> Vec<u8> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias))
            .flat_map(|v| v.to_le_bytes())
            .collect()
    }

    /// Random weights uniform in `(-amplitude, amplitude)`.
    pub fn random(input: Shape, kinds: &[LayerKind], amplitude: f32, rng: &mut impl Rng) -> Result<Self> {
        let mut shape = input;
        let mut layers = Vec::with_capacity(kinds.len());
        for kind in kinds {
            let (nw, nb) = if kind.is_linear() {
                (kind.weight_count(shape), kind.out_channels())
            } else {
                (0, 0)
            };
            let mut draw = |n: usize| -> Vec<f32> { (0..n).map(|_| rng.gen_range(-amplitude..amplitude)).collect() };
            layers.push(RealLayer {
                kind: kind.clone(),
                weights: draw(nw),
                bias: draw(nb),
            });
            shape = kind.output_shape(shape)?;
        }
        Ok(RealModel { input, layers })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedModel {
    pub network: Network,
    pub params: QuantParams,
    /// Indices in `network.layers` of the inserted Scale layers.
    pub scale_positions: Vec<usize>,
}

impl QuantizedModel {
    pub fn base(&self) -> &RnsBase {
        &self.params.base
    }

    /// Quantizes a float input tensor with the scheme's value factor.
    pub fn quantize_input(&self, values: &[f32]) -> Result<Vec<i64>> {
        let c = self.params.value_factor();
        values
            .iter()
            .map(|&v| quantize_value(v as f64, c, &self.params.base))
            .collect()
    }
}

pub fn quantize(model: &RealModel, params: &QuantParams) -> Result<QuantizedModel> {
    let scale = params.scale_layer()?;
    let (wf, bf) = (params.value_factor(), params.bias_factor());
    let base = &params.base;
    let mut layers = Vec::new();
    let mut scale_positions = Vec::new();
    for (i, l) in model.layers.iter().enumerate() {
        let q = |vals: &[f32], c: f64, what: &str| -> Result<Vec<i64>> {
            vals.iter()
                .map(|&v| {
                    quantize_value(v as f64, c, base).map_err(|e| match e {
                        QuantError::RangeOverflow { value, lo, hi, .. } => QuantError::RangeOverflow {
                            what: format!("layer {i} {what}"),
                            value,
                            lo,
                            hi,
                        },
                        e => e,
                    })
                })
                .collect()
        };
        layers.push(Layer {
            kind: l.kind.clone(),
            weights: q(&l.weights, wf, "weight")?,
            bias: q(&l.bias, bf, "bias")?,
        });
        if let (true, Some(s)) = (l.kind.is_linear(), &scale) {
            scale_positions.push(layers.len());
            layers.push(Layer::new(s.clone()));
        }
    }
    let network = Network {
        input: model.input,
        layers,
    };
    network.shapes()?;
    Ok(QuantizedModel {
        network,
        params: params.clone(),
        scale_positions,
    })
}

pub fn simple_quant_model(model: &RealModel, alpha: f64, base: &RnsBase) -> Result<QuantizedModel> {
    quantize(model, &QuantParams::new(Scheme::SimpleQuant { alpha }, base.clone())?)
}

pub fn scale_quant(model: &RealModel, ell: u32, base: &RnsBase) -> Result<QuantizedModel> {
    quantize(model, &QuantParams::new(Scheme::ScaleQuant { ell }, base.clone())?)
}

pub fn scale_quant_plus(model: &RealModel, s: u64, base: &RnsBase) -> Result<QuantizedModel> {
    quantize(model, &QuantParams::new(Scheme::ScaleQuantPlus { s }, base.clone())?)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LayerBound {
    pub layer: usize,
    /// Worst-case magnitude after this layer.
    pub bound: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RangeReport {
    /// Largest magnitude representable in both directions: `ceil(P/2) - 1`.
    pub limit: u128,
    pub input_bound: u128,
    /// One entry per linear layer, before any scaling.
    pub linear: Vec<LayerBound>,
    pub peak: u128,
    pub pass: bool,
}

/// Propagates a worst-case magnitude bound through the network.
///
/// A linear layer maps `B` to `max_o (sum_k |W[o][k]| B + |b_o|)`; ReLU keeps
/// `B`; each scaling step maps `B` to `ceil(B / s) + 1`.
pub fn check_range_with(net: &Network, base: &RnsBase, input_bound: u128) -> std::result::Result<RangeReport, NnError> {
    let shapes = net.shapes()?;
    let limit = base.negative_threshold() - 1;
    let mut b = input_bound;
    let mut peak = b;
    let mut linear = Vec::new();
    for (i, layer) in net.layers.iter().enumerate() {
        match layer.kind {
            LayerKind::Dense { .. } | LayerKind::Conv2d { .. } => {
                let map = LinearMap::for_layer(&layer.kind, shapes[i])?;
                b = layer
                    .weights
                    .chunks(map.cols.max(1))
                    .zip(&layer.bias)
                    .map(|(row, &bias)| {
                        let wsum: u128 = row.iter().map(|w| w.unsigned_abs() as u128).sum();
                        wsum.saturating_mul(b).saturating_add(bias.unsigned_abs() as u128)
                    })
                    .max()
                    .unwrap_or(0);
                linear.push(LayerBound { layer: i, bound: b });
            }
            LayerKind::Relu => {}
            LayerKind::Scale { factor, steps } => {
                for _ in 0..steps {
                    b = b.div_ceil(factor as u128) + 1;
                }
            }
        }
        peak = peak.max(b);
    }
    Ok(RangeReport {
        limit,
        input_bound,
        linear,
        peak,
        pass: peak <= limit,
    })
}

pub fn check_range(model: &QuantizedModel, input_bound: u128) -> std::result::Result<RangeReport, NnError> {
    check_range_with(&model.network, &model.params.base, input_bound)
}

/// Smallest candidate base whose range fits the network and that realizes its scales.
pub fn suggest_base<'a>(net: &Network, candidates: &'a [RnsBase], input_bound: u128) -> Option<&'a RnsBase> {
    candidates
        .iter()
        .filter(|b| net.check_scales(b).is_ok())
        .filter(|b| check_range_with(net, b, input_bound).is_ok_and(|r| r.pass))
        .min_by_key(|b| b.product())
}
