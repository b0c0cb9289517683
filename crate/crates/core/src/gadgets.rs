//! Composite garbled gadgets over RNS-encoded values.
//!
//! Each gadget is written once as a circuit over [`Fancy`] and so runs
//! unchanged for garbling, evaluation and cleartext checking.
//!
//! Base extension follows the RNS to mixed-radix recursion: with known
//! moduli `q_1..q_m` and residues `z_1 = y`, digit `d_a = [z_a]_a` and
//! `[z_{a+1}]_b = ([z_a]_b - d_a) q_a^{-1} mod q_b`. Subtracting the digit
//! in a different modulus needs a projection of the digit wire; the
//! multiplication by `q_a^{-1}` is free. Each missing modulus `t` is carried
//! along as one more position whose initial residue is the constant 0; after
//! the last digit it holds `d_{m+1}` and `[y]_t = -(q_1 .. q_m) d_{m+1}`.

use crate::garble::{
    Evaluator, Fancy, GarbleError, GarbledTable, Garbler, GarblingContext, HasModulus, Label,
    PlainEvaluator, PlainWire, PublicParams, WireSecrets,
};
use crate::rns::{mod_inverse, RnsBase, RnsError};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum GadgetKind {
    BaseExtension = 1,
    Scaling = 2,
    Sign = 3,
    Relu = 4,
}

/// Tables of one gadget instance plus its wiring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarbledGadget {
    pub kind: GadgetKind,
    pub tables: Vec<GarbledTable>,
    pub input_moduli: Vec<u32>,
    pub output_moduli: Vec<u32>,
}

impl GarbledGadget {
    pub fn ciphertext_count(&self) -> u64 {
        self.tables.iter().map(|t| t.row_count() as u64).sum()
    }
}

fn inv(a: u32, m: u32) -> u32 {
    mod_inverse(a as u64 % m as u64, m as u64).expect("moduli are coprime") as u32
}

fn neg_times(v: u32, c: u32, m: u32) -> u32 {
    let prod = (v as u64 % m as u64) * c as u64 % m as u64;
    ((m as u64 - prod) % m as u64) as u32
}

/// `z <- (z - d) * c` where `c = q_d^{-1} mod q_z`; `None` stands for the constant 0.
fn subtract_digit<F: Fancy>(
    f: &mut F,
    z: Option<&F::Item>,
    d: &F::Item,
    target: u32,
) -> Result<F::Item, GarbleError> {
    let c = inv(d.modulus(), target);
    let pd = f.proj(d, target, &|v| neg_times(v, c, target))?;
    match z {
        None => Ok(pd),
        Some(z) => {
            let zc = f.cmul(z, c)?;
            f.add(&zc, &pd)
        }
    }
}

/// Residues at `targets` of the value `y < prod(moduli of known)` whose
/// residues are carried by `known`.
pub fn mrs_extend<F: Fancy>(
    f: &mut F,
    known: &[F::Item],
    targets: &[u32],
) -> Result<Vec<F::Item>, GarbleError> {
    let mut z: Vec<F::Item> = known.to_vec();
    let mut t: Vec<Option<F::Item>> = vec![None; targets.len()];
    for a in 0..z.len() {
        let d = z[a].clone();
        for zb in z[a + 1..].iter_mut() {
            let q = zb.modulus();
            *zb = subtract_digit(f, Some(&*zb), &d, q)?;
        }
        for (slot, &pt) in t.iter_mut().zip(targets) {
            *slot = Some(subtract_digit(f, slot.as_ref(), &d, pt)?);
        }
    }
    targets
        .iter()
        .zip(t)
        .map(|(&pt, top)| {
            let weight = known
                .iter()
                .fold(1u64, |acc, w| acc * w.modulus() as u64 % pt as u64);
            match top {
                Some(top) => f.cmul(&top, (pt as u64 - weight) as u32 % pt),
                None => f.constant(0, pt),
            }
        })
        .collect()
}

/// Validated parameters of a scaling gadget.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScalingSpec {
    pub base: RnsBase,
    pub s: u64,
    /// Base positions of the moduli multiplying to `s`, smallest modulus first.
    pub s_moduli: Vec<usize>,
    /// Surviving base positions, smallest modulus first.
    pub keep: Vec<usize>,
    pub shift_up: u128,
    pub shift_down: u128,
}

impl ScalingSpec {
    pub fn new(base: &RnsBase, s: u64) -> Result<Self, RnsError> {
        let mut s_moduli = base.scale_indices(s)?;
        s_moduli.sort_by_key(|&i| base.modulus(i));
        let mut keep: Vec<usize> = (0..base.len()).filter(|i| !s_moduli.contains(i)).collect();
        keep.sort_by_key(|&i| base.modulus(i));
        let (shift_up, shift_down) = base.scaling_shifts(s);
        Ok(ScalingSpec {
            base: base.clone(),
            s,
            s_moduli,
            keep,
            shift_up,
            shift_down,
        })
    }
}

/// Wires of every stage of the scaling gadget, indexed by base position.
#[derive(Clone, Debug)]
pub struct ScalingTrace<T> {
    /// After adding `shift_up`.
    pub shifted: Vec<T>,
    /// Scaled residues at surviving positions, `None` at dropped ones.
    pub scaled: Vec<Option<T>>,
    /// After base extension.
    pub extended: Vec<T>,
    /// After subtracting `shift_down`.
    pub output: Vec<T>,
}

pub fn scaling_trace<F: Fancy>(
    f: &mut F,
    spec: &ScalingSpec,
    xs: &[F::Item],
) -> Result<ScalingTrace<F::Item>, GarbleError> {
    let base = &spec.base;
    check_inputs(base.moduli(), xs)?;
    let k = base.len();
    let shifted = xs
        .iter()
        .enumerate()
        .map(|(i, x)| f.cadd(x, (spec.shift_up % base.modulus(i) as u128) as u32))
        .collect::<Result<Vec<_>, _>>()?;

    let mut cur = shifted.clone();
    let mut gone = vec![false; k];
    for &t in &spec.s_moduli {
        gone[t] = true;
        let d = cur[t].clone();
        for j in 0..k {
            if !gone[j] {
                cur[j] = subtract_digit(f, Some(&cur[j]), &d, base.modulus(j))?;
            }
        }
    }
    let scaled: Vec<Option<F::Item>> = (0..k)
        .map(|i| (!gone[i]).then(|| cur[i].clone()))
        .collect();

    let known: Vec<F::Item> = spec.keep.iter().map(|&i| cur[i].clone()).collect();
    let targets: Vec<u32> = spec.s_moduli.iter().map(|&i| base.modulus(i)).collect();
    let ext = mrs_extend(f, &known, &targets)?;
    let mut extended = cur;
    for (&i, w) in spec.s_moduli.iter().zip(ext) {
        extended[i] = w;
    }

    let p = base.product();
    let output = extended
        .iter()
        .enumerate()
        .map(|(i, y)| {
            let m = base.modulus(i) as u128;
            f.cadd(y, ((p - spec.shift_down) % m) as u32)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ScalingTrace {
        shifted,
        scaled,
        extended,
        output,
    })
}

fn check_inputs<T: HasModulus>(moduli: &[u32], xs: &[T]) -> Result<(), GarbleError> {
    if xs.len() != moduli.len() {
        return Err(GarbleError::Malformed(format!(
            "gadget expects {} input wires, got {}",
            moduli.len(),
            xs.len()
        )));
    }
    for (x, &m) in xs.iter().zip(moduli) {
        if x.modulus() != m {
            return Err(GarbleError::ModulusMismatch {
                left: m,
                right: x.modulus(),
            });
        }
    }
    Ok(())
}

const LESS: u32 = 0;
const EQUAL: u32 = 1;
const GREATER: u32 = 2;

/// Mod-2 wire carrying 1 iff the encoded input is below `ceil(P/2)`, i.e.
/// the signed value is non-negative.
pub fn sign<F: Fancy>(f: &mut F, base: &RnsBase, xs: &[F::Item]) -> Result<F::Item, GarbleError> {
    check_inputs(base.moduli(), xs)?;
    let mut order: Vec<usize> = (0..base.len()).collect();
    order.sort_by_key(|&i| base.modulus(i));

    // threshold digits in the same mixed radix
    let ordered = RnsBase::new(&order.iter().map(|&i| base.modulus(i)).collect::<Vec<_>>())
        .expect("permutation of a valid base");
    let threshold = ordered.negative_threshold();
    let t_digits = ordered
        .to_mrs(&ordered.to_residues(threshold % ordered.product()).unwrap())
        .unwrap();
    let t_digits = t_digits.as_slice();

    let mut z: Vec<F::Item> = order.iter().map(|&i| xs[i].clone()).collect();
    let mut cmp = Vec::with_capacity(z.len());
    for a in 0..z.len() {
        let d = z[a].clone();
        for zb in z[a + 1..].iter_mut() {
            let q = zb.modulus();
            *zb = subtract_digit(f, Some(&*zb), &d, q)?;
        }
        let t = t_digits[a];
        cmp.push(f.proj(&d, 3, &|v| {
            if v < t {
                LESS
            } else if v == t {
                EQUAL
            } else {
                GREATER
            }
        })?);
    }
    let mut state = cmp.pop().expect("nonempty base");
    while let Some(lo) = cmp.pop() {
        state = f.lookup2(&state, &lo, 3, &|hi, lo| if hi == EQUAL { lo } else { hi })?;
    }
    f.proj(&state, 2, &|v| (v == LESS) as u32)
}

/// `max(x, 0)` under signed encoding.
pub fn relu<F: Fancy>(f: &mut F, base: &RnsBase, xs: &[F::Item]) -> Result<Vec<F::Item>, GarbleError> {
    let b = sign(f, base, xs)?;
    xs.iter()
        .map(|x| f.lookup2(&b, x, x.modulus(), &|bit, v| bit * v))
        .collect()
}

/// Circuit description shared by garbler and evaluator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GadgetSpec {
    /// Extends residues at every base position except `target` to `target`.
    BaseExtension { base: RnsBase, target: usize },
    /// `steps` scaling gadgets applied one after another (1 = fused).
    Scaling { spec: ScalingSpec, steps: u32 },
    Sign { base: RnsBase },
    Relu { base: RnsBase },
}

impl GadgetSpec {
    pub fn base_extension(base: &RnsBase, target: usize) -> Self {
        assert!(target < base.len() && base.len() >= 2);
        GadgetSpec::BaseExtension {
            base: base.clone(),
            target,
        }
    }

    pub fn scaling(base: &RnsBase, s: u64) -> Result<Self, RnsError> {
        Self::chained_scaling(base, s, 1)
    }

    pub fn chained_scaling(base: &RnsBase, s: u64, steps: u32) -> Result<Self, RnsError> {
        Ok(GadgetSpec::Scaling {
            spec: ScalingSpec::new(base, s)?,
            steps,
        })
    }

    pub fn kind(&self) -> GadgetKind {
        match self {
            GadgetSpec::BaseExtension { .. } => GadgetKind::BaseExtension,
            GadgetSpec::Scaling { .. } => GadgetKind::Scaling,
            GadgetSpec::Sign { .. } => GadgetKind::Sign,
            GadgetSpec::Relu { .. } => GadgetKind::Relu,
        }
    }

    pub fn input_moduli(&self) -> Vec<u32> {
        match self {
            GadgetSpec::BaseExtension { base, target } => base
                .moduli()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != *target)
                .map(|(_, &m)| m)
                .collect(),
            GadgetSpec::Scaling { spec, .. } => spec.base.moduli().to_vec(),
            GadgetSpec::Sign { base } | GadgetSpec::Relu { base } => base.moduli().to_vec(),
        }
    }

    pub fn output_moduli(&self) -> Vec<u32> {
        match self {
            GadgetSpec::BaseExtension { base, target } => vec![base.modulus(*target)],
            GadgetSpec::Scaling { spec, .. } => spec.base.moduli().to_vec(),
            GadgetSpec::Sign { .. } => vec![2],
            GadgetSpec::Relu { base } => base.moduli().to_vec(),
        }
    }

    pub fn build<F: Fancy>(&self, f: &mut F, xs: &[F::Item]) -> Result<Vec<F::Item>, GarbleError> {
        match self {
            GadgetSpec::BaseExtension { base, target } => {
                let moduli = self.input_moduli();
                check_inputs(&moduli, xs)?;
                mrs_extend(f, xs, &[base.modulus(*target)])
            }
            GadgetSpec::Scaling { spec, steps } => {
                let mut cur = xs.to_vec();
                for _ in 0..*steps {
                    cur = scaling_trace(f, spec, &cur)?.output;
                }
                Ok(cur)
            }
            GadgetSpec::Sign { base } => Ok(vec![sign(f, base, xs)?]),
            GadgetSpec::Relu { base } => relu(f, base, xs),
        }
    }

    pub fn garble(
        &self,
        ctx: &GarblingContext,
        instance: u64,
        inputs: &[WireSecrets],
    ) -> Result<(GarbledGadget, Vec<WireSecrets>), GarbleError> {
        let mut gb = Garbler::new(ctx, instance);
        let out = self.build(&mut gb, inputs)?;
        Ok((
            GarbledGadget {
                kind: self.kind(),
                tables: gb.finish(),
                input_moduli: self.input_moduli(),
                output_moduli: self.output_moduli(),
            },
            out,
        ))
    }

    pub fn evaluate(
        &self,
        params: &PublicParams,
        instance: u64,
        gadget: &GarbledGadget,
        inputs: &[Label],
    ) -> Result<Vec<Label>, GarbleError> {
        if gadget.kind != self.kind() {
            return Err(GarbleError::Malformed("gadget kind mismatch".into()));
        }
        let mut ev = Evaluator::new(params, instance, &gadget.tables);
        let out = self.build(&mut ev, inputs)?;
        if ev.remaining() != 0 {
            return Err(GarbleError::Malformed(format!(
                "{} unused tables in gadget",
                ev.remaining()
            )));
        }
        Ok(out)
    }

    /// Cleartext evaluation on residues.
    pub fn plain(&self, inputs: &[u32]) -> Result<Vec<u32>, GarbleError> {
        let wires: Vec<PlainWire> = inputs
            .iter()
            .zip(self.input_moduli())
            .map(|(&v, m)| PlainWire::new(v, m))
            .collect();
        let mut pe = PlainEvaluator::new(false);
        Ok(self.build(&mut pe, &wires)?.iter().map(|w| w.value).collect())
    }

    /// Ciphertext rows per instance, computed structurally.
    pub fn cost(&self, row_reduction: bool) -> u64 {
        let mut pe = PlainEvaluator::new(row_reduction);
        let wires: Vec<PlainWire> = self.input_moduli().iter().map(|&m| PlainWire::new(0, m)).collect();
        self.build(&mut pe, &wires).expect("structural run");
        pe.rows
    }

    /// Number of projection and lookup gates per instance.
    pub fn gate_count(&self) -> u64 {
        let mut pe = PlainEvaluator::new(false);
        let wires: Vec<PlainWire> = self.input_moduli().iter().map(|&m| PlainWire::new(0, m)).collect();
        self.build(&mut pe, &wires).expect("structural run");
        pe.gates
    }
}

fn single<T>(mut v: Vec<T>) -> T {
    v.pop().expect("one output wire")
}

pub fn garble_base_extension(
    ctx: &GarblingContext,
    instance: u64,
    base: &RnsBase,
    target: usize,
    inputs: &[WireSecrets],
) -> Result<(GarbledGadget, WireSecrets), GarbleError> {
    let (g, out) = GadgetSpec::base_extension(base, target).garble(ctx, instance, inputs)?;
    Ok((g, single(out)))
}

pub fn garble_scaling(
    ctx: &GarblingContext,
    instance: u64,
    spec: &ScalingSpec,
    inputs: &[WireSecrets],
) -> Result<(GarbledGadget, Vec<WireSecrets>), GarbleError> {
    GadgetSpec::Scaling {
        spec: spec.clone(),
        steps: 1,
    }
    .garble(ctx, instance, inputs)
}

pub fn garble_sign(
    ctx: &GarblingContext,
    instance: u64,
    base: &RnsBase,
    inputs: &[WireSecrets],
) -> Result<(GarbledGadget, WireSecrets), GarbleError> {
    let (g, out) = GadgetSpec::Sign { base: base.clone() }.garble(ctx, instance, inputs)?;
    Ok((g, single(out)))
}

pub fn garble_relu(
    ctx: &GarblingContext,
    instance: u64,
    base: &RnsBase,
    inputs: &[WireSecrets],
) -> Result<(GarbledGadget, Vec<WireSecrets>), GarbleError> {
    GadgetSpec::Relu { base: base.clone() }.garble(ctx, instance, inputs)
}
