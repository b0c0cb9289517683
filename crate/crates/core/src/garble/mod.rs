//! Arithmetic garbling over `Z_p`.
//!
//! A wire with modulus `p` carries a label `l_a = l_0 + a * R` where `l_0` is
//! the wire's zero label and `R` the circuit-wide offset for `p`. Addition,
//! multiplication by a public constant, and addition of a public constant are
//! free. Unary projections cost `p` rows (`p - 1` with row reduction) and
//! two-input lookups cost `p * q` rows.
//!
//! Gadgets are written once against [`Fancy`] and run unchanged by the
//! [`Garbler`], the [`Evaluator`] and the cleartext [`PlainEvaluator`].

mod context;
mod evaluator;
mod garbler;
mod hash;
mod label;
mod plain;
mod table;
mod tensor;

pub use context::{GarblingContext, Offset, PublicParams, AUX_MODULI, MAX_LAMBDA, MIN_LAMBDA};
pub use evaluator::Evaluator;
pub use garbler::{Garbler, WireSecrets};
pub use hash::HashAlg;
pub use label::{component_count, component_width, Label};
pub use plain::{PlainEvaluator, PlainWire};
pub use table::{GarbledTable, GateKind, TAG_LEN};
pub use tensor::LabelTensor;

pub(crate) use hash::sha256;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GarbleError {
    #[error("modulus mismatch: {left} vs {right}")]
    ModulusMismatch { left: u32, right: u32 },
    #[error("value {value} out of range for modulus {modulus}")]
    OutOfRange { value: u64, modulus: u32 },
    #[error("authentication failure at gate {gate_id}")]
    AuthFailure { gate_id: u64 },
    #[error("garbled table missing for gate {gate_id}")]
    MissingTable { gate_id: u64 },
    #[error("label is not a valid encoding for this wire")]
    DecodeFailure,
    #[error("no offset for modulus {0}")]
    UnknownModulus(u32),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed data: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, GarbleError>;

pub trait HasModulus {
    fn modulus(&self) -> u32;
}

impl HasModulus for Label {
    fn modulus(&self) -> u32 {
        Label::modulus(self)
    }
}

/// Operations every backend supports.
pub trait Fancy {
    type Item: Clone + HasModulus;

    /// Wire carrying the public constant `value`.
    fn constant(&mut self, value: u32, modulus: u32) -> Result<Self::Item>;

    fn add(&mut self, x: &Self::Item, y: &Self::Item) -> Result<Self::Item>;

    fn cmul(&mut self, x: &Self::Item, c: u32) -> Result<Self::Item>;

    /// Adds a public constant. Garbler-side re-basing; costs the evaluator nothing.
    fn cadd(&mut self, x: &Self::Item, c: u32) -> Result<Self::Item>;

    fn proj(&mut self, x: &Self::Item, q: u32, phi: &dyn Fn(u32) -> u32) -> Result<Self::Item>;

    fn lookup2(
        &mut self,
        x: &Self::Item,
        y: &Self::Item,
        m: u32,
        psi: &dyn Fn(u32, u32) -> u32,
    ) -> Result<Self::Item>;

    fn sub(&mut self, x: &Self::Item, y: &Self::Item) -> Result<Self::Item> {
        let p = y.modulus();
        let neg = self.cmul(y, p - 1)?;
        self.add(x, &neg)
    }
}

/// Number of bits of a gate id reserved for the gate index within one instance.
pub const GATE_INDEX_BITS: u32 = 20;

pub(crate) fn gate_id(instance: u64, index: u32) -> u64 {
    assert!(index < 1 << GATE_INDEX_BITS, "too many gates in one instance");
    instance << GATE_INDEX_BITS | index as u64
}

/// Garbles a unary projection on a fresh instance; convenience for single gates.
pub fn garble_projection(
    ctx: &GarblingContext,
    instance: u64,
    input: &WireSecrets,
    q: u32,
    phi: &dyn Fn(u32) -> u32,
) -> Result<(GarbledTable, WireSecrets)> {
    let mut gb = Garbler::new(ctx, instance);
    let out = gb.proj(input, q, phi)?;
    Ok((gb.finish().pop().unwrap(), out))
}

pub fn eval_projection(
    params: &PublicParams,
    instance: u64,
    table: &GarbledTable,
    x: &Label,
) -> Result<Label> {
    let tables = std::slice::from_ref(table);
    let mut ev = Evaluator::new(params, instance, tables);
    ev.proj(x, table.out_modulus, &|_| 0)
}

pub fn garble_lookup2(
    ctx: &GarblingContext,
    instance: u64,
    x: &WireSecrets,
    y: &WireSecrets,
    m: u32,
    psi: &dyn Fn(u32, u32) -> u32,
) -> Result<(GarbledTable, WireSecrets)> {
    let mut gb = Garbler::new(ctx, instance);
    let out = gb.lookup2(x, y, m, psi)?;
    Ok((gb.finish().pop().unwrap(), out))
}

pub fn eval_lookup2(
    params: &PublicParams,
    instance: u64,
    table: &GarbledTable,
    x: &Label,
    y: &Label,
) -> Result<Label> {
    let tables = std::slice::from_ref(table);
    let mut ev = Evaluator::new(params, instance, tables);
    ev.lookup2(x, y, table.out_modulus, &|_, _| 0)
}
