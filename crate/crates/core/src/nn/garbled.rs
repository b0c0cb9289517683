use rayon::prelude::*;

use super::{LayerKind, LinearMap, Network, NnError, Shape};
use crate::gadgets::{GadgetSpec, GarbledGadget};
use crate::garble::{GarbleError, GarblingContext, Label, LabelTensor, PublicParams, WireSecrets};
use crate::rns::RnsBase;

/// One layer as the evaluator sees it.
///
/// Linear layers keep their weights (they are public constants of the
/// circuit) but not their biases, which the garbler folds into the output
/// zero labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GarbledLayer {
    Linear {
        kind: LayerKind,
        weights: Vec<i64>,
    },
    /// ReLU or Scale: one gadget instance per neuron, numbered from `first_instance`.
    Gadgets {
        kind: LayerKind,
        first_instance: u64,
        gadgets: Vec<GarbledGadget>,
    },
}

impl GarbledLayer {
    pub fn kind(&self) -> &LayerKind {
        match self {
            GarbledLayer::Linear { kind, .. } | GarbledLayer::Gadgets { kind, .. } => kind,
        }
    }

    pub fn ciphertext_count(&self) -> u64 {
        match self {
            GarbledLayer::Linear { .. } => 0,
            GarbledLayer::Gadgets { gadgets, .. } => gadgets.iter().map(|g| g.ciphertext_count()).sum(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarbledModel {
    pub params: PublicParams,
    pub base: RnsBase,
    pub input: Shape,
    pub layers: Vec<GarbledLayer>,
}

impl GarbledModel {
    pub fn ciphertext_count(&self) -> u64 {
        self.layers.iter().map(|l| l.ciphertext_count()).sum()
    }

    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        let mut shapes = vec![self.input];
        for l in &self.layers {
            let next = l.kind().output_shape(*shapes.last().unwrap())?;
            shapes.push(next);
        }
        Ok(shapes)
    }
}

/// Zero labels of the model's input and output wires, one tensor per base modulus.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSecrets {
    pub input: Vec<LabelTensor>,
    pub output: Vec<LabelTensor>,
}

pub(crate) fn gadget_spec(kind: &LayerKind, base: &RnsBase) -> Result<Option<GadgetSpec>, NnError> {
    match *kind {
        LayerKind::Relu => Ok(Some(GadgetSpec::Relu { base: base.clone() })),
        LayerKind::Scale { factor, steps } => GadgetSpec::chained_scaling(base, factor, steps)
            .map(Some)
            .map_err(|_| NnError::UnrealizableScale(factor)),
        _ => Ok(None),
    }
}

fn reduced_weights(weights: &[i64], p: u32) -> Vec<u32> {
    weights.iter().map(|&w| w.rem_euclid(p as i64) as u32).collect()
}

fn linear_tensors(
    map: &LinearMap,
    base: &RnsBase,
    weights: &[i64],
    state: &[LabelTensor],
) -> Vec<LabelTensor> {
    state
        .iter()
        .zip(base.moduli())
        .map(|(t, &p)| {
            let wm = reduced_weights(weights, p);
            t.map_planes(map.output_len(), |src, dst| map.apply_mod(&wm, src, p, dst))
        })
        .collect()
}

fn input_index(position: usize, wire: usize) -> u64 {
    ((position as u64) << 32) | wire as u64
}

/// Garbles `net`; linear layers cost nothing, ReLU and Scale layers one gadget per neuron.
pub fn garble_model(
    net: &Network,
    base: &RnsBase,
    ctx: &mut GarblingContext,
) -> Result<(GarbledModel, ModelSecrets), NnError> {
    let shapes = net.shapes()?;
    net.check_scales(base)?;
    let mut offsets = Vec::with_capacity(base.len());
    for &p in base.moduli() {
        offsets.push(ctx.offset(p)?.label.clone());
    }
    let n0 = net.input.len();
    let input: Vec<LabelTensor> = base
        .moduli()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let labels: Vec<Label> = (0..n0).map(|w| ctx.input_zero_label(input_index(i, w), p)).collect();
            LabelTensor::from_labels(p, ctx.public().component_count(p), &labels)
        })
        .collect::<Result<_, _>>()?;

    let mut state = input.clone();
    let mut layers = Vec::with_capacity(net.layers.len());
    for (li, layer) in net.layers.iter().enumerate() {
        if layer.kind.is_linear() {
            let map = LinearMap::for_layer(&layer.kind, shapes[li])?;
            state = linear_tensors(&map, base, &layer.weights, &state);
            // bias b enters as l_0 <- l_0 - b * R
            for ((t, &p), r) in state.iter_mut().zip(base.moduli()).zip(&offsets) {
                for (c, &rc) in r.components().iter().enumerate() {
                    let plane = t.plane_mut(c);
                    for (o, chunk) in plane.chunks_mut(map.rows).enumerate() {
                        let shift = layer.bias[o].rem_euclid(p as i64) as u64 * rc as u64 % p as u64;
                        for v in chunk {
                            *v = ((*v as u64 + p as u64 - shift) % p as u64) as u32;
                        }
                    }
                }
            }
            layers.push(GarbledLayer::Linear {
                kind: layer.kind.clone(),
                weights: layer.weights.clone(),
            });
            continue;
        }
        let spec = gadget_spec(&layer.kind, base)?.expect("non-linear layer");
        let wires = shapes[li].len();
        let first = ctx.alloc_instances(wires as u64);
        let gctx: &GarblingContext = ctx;
        let garbled: Vec<(GarbledGadget, Vec<WireSecrets>)> = (0..wires)
            .into_par_iter()
            .map(|w| {
                let inputs: Vec<WireSecrets> = state.iter().map(|t| WireSecrets { zero: t.label(w) }).collect();
                spec.garble(gctx, first + w as u64, &inputs)
            })
            .collect::<Result<_, GarbleError>>()?;
        let mut next: Vec<LabelTensor> = state
            .iter()
            .map(|t| LabelTensor::zeros(t.modulus(), wires, t.component_count()))
            .collect();
        let mut gadgets = Vec::with_capacity(wires);
        for (w, (g, outs)) in garbled.into_iter().enumerate() {
            for (t, o) in next.iter_mut().zip(&outs) {
                t.set_label(w, &o.zero)?;
            }
            gadgets.push(g);
        }
        state = next;
        layers.push(GarbledLayer::Gadgets {
            kind: layer.kind.clone(),
            first_instance: first,
            gadgets,
        });
    }
    Ok((
        GarbledModel {
            params: ctx.public().clone(),
            base: base.clone(),
            input: net.input,
            layers,
        },
        ModelSecrets { input, output: state },
    ))
}

fn check_tensors(gm: &GarbledModel, tensors: &[LabelTensor], wires: usize) -> Result<(), NnError> {
    if tensors.len() != gm.base.len() {
        return Err(NnError::ShapeMismatch(format!(
            "{} label tensors for a base of {} moduli",
            tensors.len(),
            gm.base.len()
        )));
    }
    for (t, &p) in tensors.iter().zip(gm.base.moduli()) {
        if t.modulus() != p || t.wire_count() != wires || t.component_count() != gm.params.component_count(p) {
            return Err(NnError::ShapeMismatch(format!(
                "label tensor for modulus {p}: got modulus {} with {} wires of {} components",
                t.modulus(),
                t.wire_count(),
                t.component_count()
            )));
        }
    }
    Ok(())
}

/// Runs the garbled model on input labels, returning output labels.
pub fn eval_model(gm: &GarbledModel, inputs: &[LabelTensor]) -> Result<Vec<LabelTensor>, NnError> {
    let shapes = gm.shapes()?;
    check_tensors(gm, inputs, gm.input.len())?;
    let mut state = inputs.to_vec();
    for (li, layer) in gm.layers.iter().enumerate() {
        match layer {
            GarbledLayer::Linear { kind, weights } => {
                let map = LinearMap::for_layer(kind, shapes[li])?;
                if weights.len() != map.weight_len() {
                    return Err(NnError::ShapeMismatch(format!("layer {li}: weight count")));
                }
                state = linear_tensors(&map, &gm.base, weights, &state);
            }
            GarbledLayer::Gadgets {
                kind,
                first_instance,
                gadgets,
            } => {
                let spec = gadget_spec(kind, &gm.base)?
                    .ok_or_else(|| NnError::Malformed(format!("layer {li} has gadgets but is linear")))?;
                let wires = shapes[li].len();
                if gadgets.len() != wires {
                    return Err(NnError::ShapeMismatch(format!(
                        "layer {li}: {} gadgets for {wires} neurons",
                        gadgets.len()
                    )));
                }
                let outs: Vec<Vec<Label>> = (0..wires)
                    .into_par_iter()
                    .map(|w| {
                        let labels: Vec<Label> = state.iter().map(|t| t.label(w)).collect();
                        spec.evaluate(&gm.params, first_instance + w as u64, &gadgets[w], &labels)
                    })
                    .collect::<Result<_, GarbleError>>()?;
                let mut next: Vec<LabelTensor> = state
                    .iter()
                    .map(|t| LabelTensor::zeros(t.modulus(), wires, t.component_count()))
                    .collect();
                for (w, labels) in outs.iter().enumerate() {
                    for (t, l) in next.iter_mut().zip(labels) {
                        t.set_label(w, l)?;
                    }
                }
                state = next;
            }
        }
    }
    Ok(state)
}

/// Residues of the signed-encoded inputs, modulus-major: all wires mod `p_1`, then `p_2`, ...
pub fn input_choices(base: &RnsBase, values: &[i64]) -> Result<Vec<u32>, NnError> {
    let enc: Vec<u128> = values
        .iter()
        .map(|&v| base.encode_signed(v as i128))
        .collect::<Result<_, _>>()?;
    Ok(base
        .moduli()
        .iter()
        .flat_map(|&p| enc.iter().map(move |&e| (e % p as u128) as u32))
        .collect())
}

/// Every label of every input wire, in the order of [`input_choices`].
pub fn input_candidates(ctx: &GarblingContext, secrets: &ModelSecrets) -> Result<Vec<Vec<Label>>, NnError> {
    let mut out = Vec::new();
    for t in &secrets.input {
        for w in 0..t.wire_count() {
            let wire = WireSecrets { zero: t.label(w) };
            out.push((0..t.modulus()).map(|a| ctx.encode(&wire, a)).collect::<Result<_, _>>()?);
        }
    }
    Ok(out)
}

/// Regroups a modulus-major label list into one tensor per modulus.
pub fn tensors_from_labels(
    base: &RnsBase,
    params: &PublicParams,
    labels: &[Label],
) -> Result<Vec<LabelTensor>, NnError> {
    if base.is_empty() || !labels.len().is_multiple_of(base.len()) {
        return Err(NnError::ShapeMismatch("label count is not a multiple of the base size".into()));
    }
    let n = labels.len() / base.len();
    base.moduli()
        .iter()
        .zip(labels.chunks(n.max(1)))
        .map(|(&p, chunk)| {
            LabelTensor::from_labels(p, params.component_count(p), &chunk[..n]).map_err(NnError::from)
        })
        .collect()
}

/// Garbler-side encoding of cleartext inputs.
pub fn encode_input(
    ctx: &GarblingContext,
    base: &RnsBase,
    secrets: &ModelSecrets,
    values: &[i64],
) -> Result<Vec<LabelTensor>, NnError> {
    let n = secrets.input.first().map_or(0, |t| t.wire_count());
    if values.len() != n {
        return Err(NnError::ShapeMismatch(format!("{} inputs, expected {n}", values.len())));
    }
    let choices = input_choices(base, values)?;
    let labels: Vec<Label> = secrets
        .input
        .iter()
        .flat_map(|t| (0..n).map(move |w| (t, w)))
        .zip(&choices)
        .map(|((t, w), &a)| ctx.encode(&WireSecrets { zero: t.label(w) }, a))
        .collect::<Result<_, _>>()?;
    tensors_from_labels(base, ctx.public(), &labels)
}

/// Garbler-side decoding of output labels to signed integers.
pub fn decode_output(
    ctx: &GarblingContext,
    base: &RnsBase,
    secrets: &ModelSecrets,
    labels: &[LabelTensor],
) -> Result<Vec<i64>, NnError> {
    if labels.len() != secrets.output.len() {
        return Err(NnError::ShapeMismatch("output tensor count".into()));
    }
    let n = secrets.output.first().map_or(0, |t| t.wire_count());
    (0..n)
        .map(|w| {
            let mut residues = Vec::with_capacity(base.len());
            for (s, l) in secrets.output.iter().zip(labels) {
                if l.wire_count() != n {
                    return Err(NnError::ShapeMismatch("output wire count".into()));
                }
                residues.push(ctx.decode(&WireSecrets { zero: s.label(w) }, &l.label(w))?);
            }
            let x = base.from_residues(&base.residues(&residues)?)?;
            Ok(base.decode_signed(x) as i64)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{plaintext_infer, Layer};

    fn run(net: &Network, base: &RnsBase, x: &[i64]) -> (Vec<i64>, u64) {
        let mut ctx = GarblingContext::new(b"nn-unit", 16, base).unwrap();
        let (gm, secrets) = garble_model(net, base, &mut ctx).unwrap();
        let labels = encode_input(&ctx, base, &secrets, x).unwrap();
        let out = eval_model(&gm, &labels).unwrap();
        (decode_output(&ctx, base, &secrets, &out).unwrap(), gm.ciphertext_count())
    }

    #[test]
    fn linear_only_model_is_free() {
        let base = RnsBase::new(&[2, 3, 5, 7, 11]).unwrap();
        let net = Network {
            input: Shape::new(2, 3, 3),
            layers: vec![
                Layer::linear(LayerKind::conv(2, 2, 2, 1, 0), (0..16).map(|v| v % 5 - 2).collect(), vec![3, -4]),
                Layer::linear(LayerKind::Dense { outputs: 3 }, (0..24).map(|v| v % 3 - 1).collect(), vec![1, 0, -7]),
            ],
        };
        let x: Vec<i64> = (0..18).map(|v| v % 7 - 3).collect();
        let (y, cost) = run(&net, &base, &x);
        assert_eq!(cost, 0);
        assert_eq!(y, plaintext_infer(&net, &base, &x).unwrap());
    }

    #[test]
    fn zero_weights_decode_to_bias() {
        let base = RnsBase::new(&[2, 3, 5, 7]).unwrap();
        let net = Network {
            input: Shape::new(3, 1, 1),
            layers: vec![Layer::linear(LayerKind::Dense { outputs: 2 }, vec![0; 6], vec![-9, 17])],
        };
        assert_eq!(run(&net, &base, &[0, 0, 0]).0, vec![-9, 17]);
    }

    #[test]
    fn relu_and_scale_layers_match_oracle() {
        let base = RnsBase::new(&[2, 3, 5, 7]).unwrap();
        let net = Network {
            input: Shape::new(4, 1, 1),
            layers: vec![
                Layer::linear(LayerKind::Dense { outputs: 4 }, (0..16).map(|v| v % 5 - 2).collect(), vec![1, -2, 0, 5]),
                Layer::new(LayerKind::Scale { factor: 6, steps: 1 }),
                Layer::new(LayerKind::Relu),
            ],
        };
        for x in [[0, 0, 0, 0], [9, -9, 4, 1], [-20, 13, 7, -5]] {
            let (y, cost) = run(&net, &base, &x);
            assert_eq!(y, plaintext_infer(&net, &base, &x).unwrap());
            let per_neuron = GadgetSpec::scaling(&base, 6).unwrap().cost(true)
                + GadgetSpec::Relu { base: base.clone() }.cost(true);
            assert_eq!(cost, 4 * per_neuron);
        }
    }

    #[test]
    fn wrong_input_shape_is_rejected() {
        let base = RnsBase::new(&[2, 3, 5]).unwrap();
        let net = Network {
            input: Shape::new(2, 1, 1),
            layers: vec![Layer::new(LayerKind::Relu)],
        };
        let mut ctx = GarblingContext::new(b"nn-unit", 16, &base).unwrap();
        let (gm, secrets) = garble_model(&net, &base, &mut ctx).unwrap();
        assert!(encode_input(&ctx, &base, &secrets, &[1]).is_err());
        assert!(eval_model(&gm, &secrets.input[..2]).is_err());
    }
}
