//! Ciphertext accounting for base extension and scaling gadgets.

use std::io::Write;

use serde::Serialize;

use crate::gadgets::{GadgetSpec, GarbledGadget};
use crate::garble::{GarbleError, GarblingContext, GateKind, WireSecrets};
use crate::rns::{RnsBase, RnsError};

/// `sum_{i=1}^{k-1} sum_{j=i}^{k-1} p_j`, the closed form quoted for base extension.
pub fn formula_be_cost(base: &RnsBase) -> u64 {
    let m = base.moduli();
    let k = m.len();
    (0..k.saturating_sub(1))
        .map(|i| m[i..k - 1].iter().map(|&p| p as u64).sum::<u64>())
        .sum()
}

/// The same double sum keyed by the projected digit's modulus:
/// `sum_{i=1}^{k-1} (k - i) p_i`. This is the size of the pruned circuit.
pub fn source_keyed_be_cost(base: &RnsBase) -> u64 {
    let m = base.moduli();
    let k = m.len();
    (0..k.saturating_sub(1)).map(|i| (k - 1 - i) as u64 * m[i] as u64).sum()
}

pub fn measured_cost(gadget: &GarbledGadget) -> u64 {
    gadget.ciphertext_count()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GateCost {
    pub kind: &'static str,
    pub input: u32,
    /// Second input modulus of a lookup, 0 for projections.
    pub input2: u32,
    pub output: u32,
    pub rows: u64,
}

pub fn breakdown(gadget: &GarbledGadget) -> Vec<GateCost> {
    gadget
        .tables
        .iter()
        .map(|t| GateCost {
            kind: match t.kind {
                GateKind::Projection => "projection",
                GateKind::Lookup2 => "lookup2",
            },
            input: t.in_moduli[0],
            input2: t.in_moduli[1],
            output: t.out_modulus,
            rows: t.row_count() as u64,
        })
        .collect()
}

/// Garbles one instance of `spec` with fresh input labels.
pub fn garble_once(spec: &GadgetSpec, base: &RnsBase, row_reduction: bool) -> Result<GarbledGadget, GarbleError> {
    let ctx = GarblingContext::with_options(b"cost-audit", 16, base, row_reduction)?;
    let inputs: Vec<WireSecrets> = spec
        .input_moduli()
        .iter()
        .enumerate()
        .map(|(i, &p)| WireSecrets {
            zero: ctx.input_zero_label(i as u64, p),
        })
        .collect();
    Ok(spec.garble(&ctx, 0, &inputs)?.0)
}

/// `base` with its power-of-two modulus replaced by 2, for emulating
/// repeated halving.
pub fn halving_base(base: &RnsBase) -> Result<RnsBase, RnsError> {
    let moduli: Vec<u32> = base
        .moduli()
        .iter()
        .map(|&p| if p.is_power_of_two() { 2 } else { p })
        .collect();
    RnsBase::new(&moduli)
}

/// CPM base of `k` primes with 2 replaced by `2^ell`.
pub fn power_of_two_cpm(k: usize, ell: u32) -> Result<RnsBase, RnsError> {
    let mut moduli = crate::rns::first_primes(k);
    moduli[0] = 1 << ell;
    RnsBase::new(&moduli)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CostReport {
    pub k: usize,
    pub base: String,
    pub s: u64,
    /// The quoted base-extension formula on this base.
    pub formula: u64,
    pub formula_source_keyed: u64,
    /// Base extension of the last modulus from the others, no row reduction.
    pub be_measured: u64,
    /// Fused scaling gadget, no row reduction.
    pub measured: u64,
    pub measured_rr: u64,
    /// One halving gadget on the base with 2 in place of `s`, no row reduction.
    pub single_step: Option<u64>,
    /// `log2 s` halving gadgets in a row.
    pub chained: Option<u64>,
    pub chained_rr: Option<u64>,
    #[serde(skip)]
    pub breakdown: Vec<GateCost>,
}

pub fn compare(base: &RnsBase, s: u64) -> Result<CostReport, GarbleError> {
    let invalid = |e: RnsError| GarbleError::InvalidParameter(e.to_string());
    let fused = GadgetSpec::scaling(base, s).map_err(invalid)?;
    let plain = garble_once(&fused, base, false)?;
    let reduced = garble_once(&fused, base, true)?;
    let be_measured = if base.len() >= 2 {
        measured_cost(&garble_once(&GadgetSpec::base_extension(base, base.len() - 1), base, false)?)
    } else {
        0
    };
    let (single_step, chained, chained_rr) = if s.is_power_of_two() && s > 1 {
        let ell = s.trailing_zeros();
        let hb = halving_base(base).map_err(invalid)?;
        let step = GadgetSpec::scaling(&hb, 2).map_err(invalid)?;
        let one = measured_cost(&garble_once(&step, &hb, false)?);
        let one_rr = measured_cost(&garble_once(&step, &hb, true)?);
        (Some(one), Some(ell as u64 * one), Some(ell as u64 * one_rr))
    } else {
        (None, None, None)
    };
    Ok(CostReport {
        k: base.len(),
        base: base.to_string(),
        s,
        formula: formula_be_cost(base),
        formula_source_keyed: source_keyed_be_cost(base),
        be_measured,
        measured: measured_cost(&plain),
        measured_rr: measured_cost(&reduced),
        single_step,
        chained,
        chained_rr,
        breakdown: breakdown(&plain),
    })
}

/// One report per CPM size `k` in `ks`, scaling by `2^ell` on the CPM base
/// whose 2 is replaced by `2^ell`. The base-extension columns (`formula`,
/// `formula_source_keyed`, `be_measured`) refer to the plain CPM base.
pub fn cpm_sweep(ks: impl IntoIterator<Item = usize>, ell: u32) -> Result<Vec<CostReport>, GarbleError> {
    let invalid = |e: RnsError| GarbleError::InvalidParameter(e.to_string());
    ks.into_iter()
        .map(|k| {
            let base = power_of_two_cpm(k, ell).map_err(invalid)?;
            let cpm = RnsBase::cpm(k).map_err(invalid)?;
            let mut r = compare(&base, 1 << ell)?;
            r.formula = formula_be_cost(&cpm);
            r.formula_source_keyed = source_keyed_be_cost(&cpm);
            r.be_measured = if k >= 2 {
                measured_cost(&garble_once(&GadgetSpec::base_extension(&cpm, k - 1), &cpm, false)?)
            } else {
                0
            };
            Ok(r)
        })
        .collect()
}

pub fn write_csv<W: Write>(out: W, reports: &[CostReport]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
