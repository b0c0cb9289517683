use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use super::hash::{sha256, HashAlg};
use super::label::{component_count, Label};
use super::GarbleError;
use crate::rns::{gcd, mod_inverse, RnsBase};

pub const MIN_LAMBDA: u16 = 16;
pub const MAX_LAMBDA: u16 = 128;

/// Extra moduli every context supports on top of the base (sign and select wires).
pub const AUX_MODULI: [u32; 2] = [2, 3];

/// Parameters the evaluator needs; nothing secret.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PublicParams {
    pub lambda: u16,
    pub salt: [u8; 32],
    pub row_reduction: bool,
    pub hash_alg: HashAlg,
}

impl PublicParams {
    pub fn component_count(&self, modulus: u32) -> usize {
        component_count(modulus, self.lambda)
    }
}

/// Global offset `R` for one modulus.
#[derive(Clone, Debug)]
pub struct Offset {
    pub label: Label,
    /// `R[0]^{-1} mod p`, used to read values off the color component.
    pub color_inv: u32,
}

/// Garbler-side state: global offsets, a public salt and an instance counter.
///
/// Every label the garbler samples is derived from the seed and a
/// `(domain, id)` pair, so identical seeds give bit-identical circuits even
/// when gadget instances are garbled in parallel.
#[derive(Clone, Debug)]
pub struct GarblingContext {
    public: PublicParams,
    master: [u8; 32],
    offsets: BTreeMap<u32, Offset>,
    next_instance: u64,
}

#[derive(Clone, Copy, Debug)]
#[repr(u8)]
pub(crate) enum Domain {
    Offset = 1,
    Input = 2,
    Gate = 3,
}

impl GarblingContext {
    pub fn new(seed: &[u8], lambda: u16, base: &RnsBase) -> Result<Self, GarbleError> {
        Self::with_options(seed, lambda, base, true)
    }

    pub fn with_options(
        seed: &[u8],
        lambda: u16,
        base: &RnsBase,
        row_reduction: bool,
    ) -> Result<Self, GarbleError> {
        if seed.is_empty() {
            return Err(GarbleError::InvalidParameter("seed must be nonempty".into()));
        }
        if !(MIN_LAMBDA..=MAX_LAMBDA).contains(&lambda) {
            return Err(GarbleError::InvalidParameter(format!(
                "lambda {lambda} outside {MIN_LAMBDA}..={MAX_LAMBDA}"
            )));
        }
        let master = sha256(&[b"rnsgc/master", seed]);
        let salt = sha256(&[b"rnsgc/salt", &master]);
        let mut ctx = GarblingContext {
            public: PublicParams {
                lambda,
                salt,
                row_reduction,
                hash_alg: HashAlg::Sha256,
            },
            master,
            offsets: BTreeMap::new(),
            next_instance: 0,
        };
        for &m in base.moduli().iter().chain(AUX_MODULI.iter()) {
            if !ctx.offsets.contains_key(&m) {
                let off = ctx.sample_offset(m);
                ctx.offsets.insert(m, off);
            }
        }
        Ok(ctx)
    }

    fn rng(&self, domain: Domain, id: u64, modulus: u32) -> ChaCha20Rng {
        let seed = sha256(&[
            &self.master,
            &[domain as u8],
            &id.to_le_bytes(),
            &modulus.to_le_bytes(),
        ]);
        ChaCha20Rng::from_seed(seed)
    }

    fn sample_offset(&self, m: u32) -> Offset {
        let n = self.public.component_count(m);
        let mut rng = self.rng(Domain::Offset, 0, m);
        let mut comps: Vec<u32> = (0..n).map(|_| rng.gen_range(0..m)).collect();
        // the color component must be a unit so colors permute Z_m
        while comps[0] == 0 || gcd(comps[0] as u64, m as u64) != 1 {
            comps[0] = rng.gen_range(0..m);
        }
        let color_inv = mod_inverse(comps[0] as u64, m as u64).unwrap() as u32;
        Offset {
            label: Label::from_raw(m, comps),
            color_inv,
        }
    }

    pub(crate) fn fresh_label(&self, domain: Domain, id: u64, modulus: u32) -> Label {
        let n = self.public.component_count(modulus);
        let mut rng = self.rng(domain, id, modulus);
        Label::from_raw(modulus, (0..n).map(|_| rng.gen_range(0..modulus)).collect())
    }

    /// Zero label of the `index`-th input wire with the given modulus.
    pub fn input_zero_label(&self, index: u64, modulus: u32) -> Label {
        self.fresh_label(Domain::Input, index, modulus)
    }

    pub fn public(&self) -> &PublicParams {
        &self.public
    }

    pub fn offset(&self, modulus: u32) -> Result<&Offset, GarbleError> {
        self.offsets
            .get(&modulus)
            .ok_or(GarbleError::UnknownModulus(modulus))
    }

    pub fn moduli(&self) -> impl Iterator<Item = u32> + '_ {
        self.offsets.keys().copied()
    }

    /// Reserves `count` consecutive gadget instance numbers.
    pub fn alloc_instances(&mut self, count: u64) -> u64 {
        let start = self.next_instance;
        self.next_instance += count;
        start
    }
}
