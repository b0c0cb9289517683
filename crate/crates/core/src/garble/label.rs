//! Wire labels over `Z_p`.

use super::GarbleError;

/// Smallest `n` with `p^n >= 2^lambda`.
pub fn component_count(modulus: u32, lambda: u16) -> usize {
    assert!(modulus >= 2 && lambda <= 128);
    let mut acc: u128 = 1;
    let mut n = 0;
    loop {
        if lambda < 128 && acc >= 1u128 << lambda {
            return n;
        }
        match acc.checked_mul(modulus as u128) {
            Some(v) => acc = v,
            // p^(n+1) >= 2^128 >= 2^lambda
            None => return n + 1,
        }
        n += 1;
    }
}

/// Bytes per component in the canonical little-endian encoding.
pub fn component_width(modulus: u32) -> usize {
    if modulus <= 1 << 8 {
        1
    } else if modulus <= 1 << 16 {
        2
    } else {
        4
    }
}

/// A garbled wire label: `n` components in `Z_p`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Label {
    modulus: u32,
    comps: Vec<u32>,
}

impl Label {
    pub fn new(modulus: u32, comps: Vec<u32>) -> Result<Self, GarbleError> {
        if let Some(&c) = comps.iter().find(|&&c| c >= modulus) {
            return Err(GarbleError::OutOfRange {
                value: c as u64,
                modulus,
            });
        }
        Ok(Label { modulus, comps })
    }

    pub(crate) fn from_raw(modulus: u32, comps: Vec<u32>) -> Self {
        debug_assert!(comps.iter().all(|&c| c < modulus));
        Label { modulus, comps }
    }

    pub fn zero(modulus: u32, n: usize) -> Self {
        Label {
            modulus,
            comps: vec![0; n],
        }
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn components(&self) -> &[u32] {
        &self.comps
    }

    pub fn len(&self) -> usize {
        self.comps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.comps.is_empty()
    }

    /// Public point-and-permute color.
    pub fn color(&self) -> u32 {
        self.comps[0]
    }

    fn check(&self, other: &Label) -> Result<(), GarbleError> {
        if self.modulus != other.modulus || self.comps.len() != other.comps.len() {
            return Err(GarbleError::ModulusMismatch {
                left: self.modulus,
                right: other.modulus,
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Label) -> Result<Label, GarbleError> {
        self.check(other)?;
        let p = self.modulus as u64;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(&a, &b)| ((a as u64 + b as u64) % p) as u32)
            .collect();
        Ok(Label::from_raw(self.modulus, comps))
    }

    pub fn sub(&self, other: &Label) -> Result<Label, GarbleError> {
        self.check(other)?;
        let p = self.modulus as u64;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(&a, &b)| ((a as u64 + p - b as u64) % p) as u32)
            .collect();
        Ok(Label::from_raw(self.modulus, comps))
    }

    pub fn cmul(&self, c: u32) -> Label {
        let p = self.modulus as u64;
        let c = c as u64 % p;
        let comps = self.comps.iter().map(|&a| (a as u64 * c % p) as u32).collect();
        Label::from_raw(self.modulus, comps)
    }

    /// `self + c * other`, the workhorse of label encoding.
    pub fn add_scaled(&self, other: &Label, c: u32) -> Result<Label, GarbleError> {
        self.check(other)?;
        let p = self.modulus as u64;
        let c = c as u64 % p;
        let comps = self
            .comps
            .iter()
            .zip(&other.comps)
            .map(|(&a, &b)| ((a as u64 + b as u64 * c) % p) as u32)
            .collect();
        Ok(Label::from_raw(self.modulus, comps))
    }

    pub(crate) fn add_assign_unchecked(&mut self, other: &Label) {
        let p = self.modulus;
        for (a, &b) in self.comps.iter_mut().zip(&other.comps) {
            let s = *a as u64 + b as u64;
            *a = if s >= p as u64 { (s - p as u64) as u32 } else { s as u32 };
        }
    }

    pub fn encoded_len(&self) -> usize {
        self.comps.len() * component_width(self.modulus)
    }

    /// Appends the canonical fixed-width little-endian encoding.
    pub fn write_bytes(&self, out: &mut Vec<u8>) {
        let w = component_width(self.modulus);
        for &c in &self.comps {
            out.extend_from_slice(&c.to_le_bytes()[..w]);
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        self.write_bytes(&mut out);
        out
    }

    pub fn from_bytes(modulus: u32, n: usize, bytes: &[u8]) -> Result<Label, GarbleError> {
        let w = component_width(modulus);
        if bytes.len() != n * w {
            return Err(GarbleError::Malformed(format!(
                "label needs {} bytes, got {}",
                n * w,
                bytes.len()
            )));
        }
        let comps = bytes
            .chunks_exact(w)
            .map(|ch| {
                let mut buf = [0u8; 4];
                buf[..w].copy_from_slice(ch);
                u32::from_le_bytes(buf)
            })
            .collect();
        Label::new(modulus, comps)
    }
}
