use super::{Fancy, GarbleError, HasModulus, Result};

/// A cleartext wire value.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PlainWire {
    pub modulus: u32,
    pub value: u32,
}

impl PlainWire {
    pub fn new(value: u32, modulus: u32) -> Self {
        PlainWire {
            modulus,
            value: value % modulus,
        }
    }
}

impl HasModulus for PlainWire {
    fn modulus(&self) -> u32 {
        self.modulus
    }
}

/// Runs gadgets on cleartext values and tallies what garbling would cost.
#[derive(Clone, Debug, Default)]
pub struct PlainEvaluator {
    pub row_reduction: bool,
    pub gates: u64,
    pub rows: u64,
}

impl PlainEvaluator {
    pub fn new(row_reduction: bool) -> Self {
        PlainEvaluator {
            row_reduction,
            ..Default::default()
        }
    }
}

impl Fancy for PlainEvaluator {
    type Item = PlainWire;

    fn constant(&mut self, value: u32, modulus: u32) -> Result<PlainWire> {
        Ok(PlainWire::new(value, modulus))
    }

    fn add(&mut self, x: &PlainWire, y: &PlainWire) -> Result<PlainWire> {
        if x.modulus != y.modulus {
            return Err(GarbleError::ModulusMismatch {
                left: x.modulus,
                right: y.modulus,
            });
        }
        let m = x.modulus as u64;
        Ok(PlainWire::new(((x.value as u64 + y.value as u64) % m) as u32, x.modulus))
    }

    fn cmul(&mut self, x: &PlainWire, c: u32) -> Result<PlainWire> {
        let m = x.modulus as u64;
        Ok(PlainWire::new((x.value as u64 * (c as u64 % m) % m) as u32, x.modulus))
    }

    fn cadd(&mut self, x: &PlainWire, c: u32) -> Result<PlainWire> {
        let m = x.modulus as u64;
        Ok(PlainWire::new(((x.value as u64 + c as u64 % m) % m) as u32, x.modulus))
    }

    fn proj(&mut self, x: &PlainWire, q: u32, phi: &dyn Fn(u32) -> u32) -> Result<PlainWire> {
        self.gates += 1;
        self.rows += x.modulus as u64 - self.row_reduction as u64;
        Ok(PlainWire::new(phi(x.value) % q, q))
    }

    fn lookup2(
        &mut self,
        x: &PlainWire,
        y: &PlainWire,
        m: u32,
        psi: &dyn Fn(u32, u32) -> u32,
    ) -> Result<PlainWire> {
        self.gates += 1;
        self.rows += x.modulus as u64 * y.modulus as u64;
        Ok(PlainWire::new(psi(x.value, y.value) % m, m))
    }
}
