//! Plaintext residue number system (RNS) and mixed-radix (MRS) arithmetic.
//!
//! Everything here is exact integer arithmetic and acts as the reference the
//! garbled constructions are checked against. Residues are `u32`, products of
//! two residues are formed in `u64`, and the base cardinality is held in a
//! checked `u128` that must also fit in `i128` so signed values are exact.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RnsError {
    #[error("modulus {0} is too small, every modulus must be at least 2")]
    ModulusTooSmall(u64),
    #[error("moduli {0} and {1} share a common factor")]
    NonCoprime(u32, u32),
    #[error("an RNS base needs at least one modulus")]
    EmptyBase,
    #[error("product of the moduli does not fit in 127 bits")]
    ProductOverflow,
    #[error("value {0} is outside the representable range")]
    OutOfRange(i128),
    #[error("expected {expected} residues, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("residue {residue} is not reduced modulo {modulus}")]
    UnreducedResidue { residue: u32, modulus: u32 },
    #[error("scale factor {0} is not a product of distinct base moduli leaving at least one modulus")]
    InvalidScaleFactor(u64),
    #[error("cannot parse modulus list {0:?}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, RnsError>;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Inverse of `a` modulo `m` via extended Euclid, or `None` if `gcd(a, m) != 1`.
pub fn mod_inverse(a: u64, m: u64) -> Option<u64> {
    if m == 1 {
        return Some(0);
    }
    let (mut old_r, mut r) = ((a % m) as i128, m as i128);
    let (mut old_s, mut s) = (1i128, 0i128);
    while r != 0 {
        let q = old_r / r;
        (old_r, r) = (r, old_r - q * r);
        (old_s, s) = (s, old_s - q * s);
    }
    if old_r != 1 {
        return None;
    }
    Some(old_s.rem_euclid(m as i128) as u64)
}

/// The first `k` primes.
pub fn first_primes(k: usize) -> Vec<u32> {
    let mut primes = Vec::with_capacity(k);
    let mut n = 2u32;
    while primes.len() < k {
        if primes.iter().take_while(|&&p| p * p <= n).all(|&p| !n.is_multiple_of(p)) {
            primes.push(n);
        }
        n += 1;
    }
    primes
}

/// An ordered set of pairwise coprime moduli with precomputed constants.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<u32>", into = "Vec<u32>")]
pub struct RnsBase {
    moduli: Vec<u32>,
    product: u128,
    /// `partial[i]` is the product of the first `i` moduli; `partial[0] = 1`.
    partial: Vec<u128>,
    /// `inv[i * k + j] = p_j^{-1} mod p_i` for `i != j`.
    inv: Vec<u32>,
}

impl RnsBase {
    pub fn new(moduli: &[u32]) -> Result<Self> {
        if moduli.is_empty() {
            return Err(RnsError::EmptyBase);
        }
        if let Some(&m) = moduli.iter().find(|&&m| m < 2) {
            return Err(RnsError::ModulusTooSmall(m as u64));
        }
        for (i, &a) in moduli.iter().enumerate() {
            for &b in &moduli[i + 1..] {
                if gcd(a as u64, b as u64) != 1 {
                    return Err(RnsError::NonCoprime(a, b));
                }
            }
        }
        let mut partial = Vec::with_capacity(moduli.len() + 1);
        partial.push(1u128);
        for &m in moduli {
            let next = partial
                .last()
                .unwrap()
                .checked_mul(m as u128)
                .filter(|&v| v <= i128::MAX as u128)
                .ok_or(RnsError::ProductOverflow)?;
            partial.push(next);
        }
        let k = moduli.len();
        let mut inv = vec![0u32; k * k];
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    inv[i * k + j] =
                        mod_inverse(moduli[j] as u64, moduli[i] as u64).expect("coprime") as u32;
                }
            }
        }
        Ok(RnsBase {
            moduli: moduli.to_vec(),
            product: partial[k],
            partial,
            inv,
        })
    }

    /// Base of the first `k` primes (composite primal modulus).
    pub fn cpm(k: usize) -> Result<Self> {
        Self::new(&first_primes(k))
    }

    pub fn moduli(&self) -> &[u32] {
        &self.moduli
    }

    pub fn len(&self) -> usize {
        self.moduli.len()
    }

    pub fn is_empty(&self) -> bool {
        self.moduli.is_empty()
    }

    pub fn modulus(&self, i: usize) -> u32 {
        self.moduli[i]
    }

    pub fn product(&self) -> u128 {
        self.product
    }

    /// Product of the first `i` moduli (`P_i`), with `P_0 = 1`.
    pub fn partial_product(&self, i: usize) -> u128 {
        self.partial[i]
    }

    /// `p_j^{-1} mod p_i`.
    pub fn inverse(&self, j: usize, i: usize) -> u32 {
        debug_assert_ne!(i, j);
        self.inv[i * self.len() + j]
    }

    pub fn index_of(&self, modulus: u32) -> Option<usize> {
        self.moduli.iter().position(|&m| m == modulus)
    }

    fn check_residues(&self, r: &[u32]) -> Result<()> {
        if r.len() != self.len() {
            return Err(RnsError::LengthMismatch {
                expected: self.len(),
                got: r.len(),
            });
        }
        for (&residue, &modulus) in r.iter().zip(&self.moduli) {
            if residue >= modulus {
                return Err(RnsError::UnreducedResidue { residue, modulus });
            }
        }
        Ok(())
    }

    pub fn to_residues(&self, x: u128) -> Result<ResidueVector> {
        if x >= self.product {
            return Err(RnsError::OutOfRange(x as i128));
        }
        Ok(ResidueVector(
            self.moduli.iter().map(|&m| (x % m as u128) as u32).collect(),
        ))
    }

    pub fn residues(&self, r: &[u32]) -> Result<ResidueVector> {
        self.check_residues(r)?;
        Ok(ResidueVector(r.to_vec()))
    }

    /// CRT reconstruction through the associated mixed-radix digits (Garner).
    pub fn from_residues(&self, r: &ResidueVector) -> Result<u128> {
        Ok(self.from_mrs(&self.to_mrs(r)?))
    }

    /// Digits of the associated MRS (radices equal to the moduli).
    pub fn to_mrs(&self, r: &ResidueVector) -> Result<MrsDigits> {
        self.check_residues(&r.0)?;
        let k = self.len();
        let mut z: Vec<u64> = r.0.iter().map(|&v| v as u64).collect();
        for i in 0..k {
            let d = z[i];
            for (j, zj) in z.iter_mut().enumerate().skip(i + 1) {
                let pj = self.moduli[j] as u64;
                let diff = (*zj + pj - d % pj) % pj;
                *zj = diff * self.inverse(i, j) as u64 % pj;
            }
        }
        Ok(MrsDigits(z.into_iter().map(|v| v as u32).collect()))
    }

    pub fn from_mrs(&self, d: &MrsDigits) -> u128 {
        d.0.iter()
            .enumerate()
            .map(|(i, &digit)| digit as u128 * self.partial[i])
            .sum()
    }

    /// Recovers the residue at the last modulus of a value `y < P_{k-1}`
    /// given its residues at the first `k - 1` moduli.
    ///
    /// The recursion runs on `(y_1, .., y_{k-1}, 0)`, whose top MRS digit
    /// `d_k` satisfies `y + d_k P_{k-1} = 0 mod p_k`, so `[y]_k = -P_{k-1} d_k`.
    pub fn base_extend(&self, partial: &[u32]) -> Result<u32> {
        let k = self.len();
        if partial.len() + 1 != k {
            return Err(RnsError::LengthMismatch {
                expected: k.saturating_sub(1),
                got: partial.len(),
            });
        }
        let known: Vec<usize> = (0..k - 1).collect();
        Ok(self.extend_indices(&known, partial, &[k - 1])?[0])
    }

    /// Extends a value given by its residues at `known` base positions (and
    /// bounded by their product) to each position in `targets`.
    pub fn extend_indices(
        &self,
        known: &[usize],
        residues: &[u32],
        targets: &[usize],
    ) -> Result<Vec<u32>> {
        if known.len() != residues.len() {
            return Err(RnsError::LengthMismatch {
                expected: known.len(),
                got: residues.len(),
            });
        }
        for (&i, &r) in known.iter().zip(residues) {
            if r >= self.moduli[i] {
                return Err(RnsError::UnreducedResidue {
                    residue: r,
                    modulus: self.moduli[i],
                });
            }
        }
        let mut z: Vec<u64> = residues.iter().map(|&v| v as u64).collect();
        let mut t = vec![0u64; targets.len()];
        for (a, &ia) in known.iter().enumerate() {
            let d = z[a];
            for (b, &ib) in known.iter().enumerate().skip(a + 1) {
                let pb = self.moduli[ib] as u64;
                z[b] = (z[b] + pb - d % pb) % pb * self.inverse(ia, ib) as u64 % pb;
            }
            for (slot, &it) in t.iter_mut().zip(targets) {
                let pt = self.moduli[it] as u64;
                *slot = (*slot + pt - d % pt) % pt * self.inverse(ia, it) as u64 % pt;
            }
        }
        let known_product: u128 = known.iter().map(|&i| self.moduli[i] as u128).product();
        Ok(t.iter()
            .zip(targets)
            .map(|(&d_top, &it)| {
                let pt = self.moduli[it] as u64;
                let w = (known_product % pt as u128) as u64;
                ((pt - w) % pt * d_top % pt) as u32
            })
            .collect())
    }

    /// Base positions whose moduli multiply to `s`. At least one modulus must remain.
    pub fn scale_indices(&self, s: u64) -> Result<Vec<usize>> {
        let mut rest = s;
        let mut idx = Vec::new();
        for (i, &m) in self.moduli.iter().enumerate() {
            if gcd(m as u64, s) > 1 {
                if !rest.is_multiple_of(m as u64) {
                    return Err(RnsError::InvalidScaleFactor(s));
                }
                rest /= m as u64;
                idx.push(i);
            }
        }
        if rest != 1 || idx.is_empty() || idx.len() == self.len() {
            return Err(RnsError::InvalidScaleFactor(s));
        }
        Ok(idx)
    }

    /// Unsigned floor scaling `x -> floor(x / s)` carried out residue by residue:
    /// subtract and divide away each scaling modulus, then extend back to the
    /// dropped moduli.
    pub fn scale_residues(&self, r: &ResidueVector, s: u64) -> Result<ResidueVector> {
        self.check_residues(&r.0)?;
        let drop = self.scale_indices(s)?;
        let mut cur: Vec<u64> = r.0.iter().map(|&v| v as u64).collect();
        let mut gone = vec![false; self.len()];
        for &t in &drop {
            gone[t] = true;
            for j in 0..self.len() {
                if !gone[j] {
                    let pj = self.moduli[j] as u64;
                    cur[j] = (cur[j] + pj - cur[t] % pj) % pj * self.inverse(t, j) as u64 % pj;
                }
            }
        }
        let keep: Vec<usize> = (0..self.len()).filter(|&j| !gone[j]).collect();
        let kept: Vec<u32> = keep.iter().map(|&j| cur[j] as u32).collect();
        let ext = self.extend_indices(&keep, &kept, &drop)?;
        let mut out: Vec<u32> = cur.iter().map(|&v| v as u32).collect();
        for (&t, v) in drop.iter().zip(ext) {
            out[t] = v;
        }
        Ok(ResidueVector(out))
    }

    /// Smallest encoded value that decodes as negative: `ceil(P / 2)`.
    pub fn negative_threshold(&self) -> u128 {
        self.product.div_ceil(2)
    }

    /// Inclusive signed range `[-floor(P/2), ceil(P/2) - 1]`.
    pub fn signed_range(&self) -> (i128, i128) {
        let p = self.product as i128;
        (-(p / 2), (p + 1) / 2 - 1)
    }

    pub fn encode_signed(&self, v: i128) -> Result<u128> {
        let (lo, hi) = self.signed_range();
        if v < lo || v > hi {
            return Err(RnsError::OutOfRange(v));
        }
        Ok(v.rem_euclid(self.product as i128) as u128)
    }

    pub fn decode_signed(&self, e: u128) -> i128 {
        let e = e % self.product;
        if e >= self.negative_threshold() {
            e as i128 - self.product as i128
        } else {
            e as i128
        }
    }

    pub fn scaling_shifts(&self, s: u64) -> (u128, u128) {
        (self.product / 2, self.product / (2 * s as u128))
    }
}

impl fmt::Debug for RnsBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RnsBase{:?}", self.moduli)
    }
}

impl fmt::Display for RnsBase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.moduli.iter().map(|m| m.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

impl FromStr for RnsBase {
    type Err = RnsError;

    /// Parses a comma-separated modulus list such as `"32,167,173"`.
    fn from_str(s: &str) -> Result<Self> {
        let moduli = s
            .split(',')
            .map(|t| t.trim().parse::<u32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| RnsError::Parse(s.to_string()))?;
        RnsBase::new(&moduli)
    }
}

impl TryFrom<Vec<u32>> for RnsBase {
    type Error = RnsError;
    fn try_from(v: Vec<u32>) -> Result<Self> {
        RnsBase::new(&v)
    }
}

impl From<RnsBase> for Vec<u32> {
    fn from(b: RnsBase) -> Vec<u32> {
        b.moduli
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ResidueVector(Vec<u32>);

impl ResidueVector {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<u32> {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MrsDigits(Vec<u32>);

impl MrsDigits {
    pub fn as_slice(&self) -> &[u32] {
        &self.0
    }
}

/// End-to-end semantics of the signed scaling gadget: shift up by
/// `floor(P/2)`, floor-divide by `s`, shift down by `floor(P/(2s))`, all in
/// `Z_P`. For even `P` with `2s | P` this is `floor(x / s)` (rounding toward
/// negative infinity).
pub fn scale_signed_plain(x: i128, s: u64, base: &RnsBase) -> Result<i128> {
    base.scale_indices(s)?;
    let p = base.product();
    let enc = base.encode_signed(x)?;
    let (up, down) = base.scaling_shifts(s);
    let shifted = (enc + up) % p;
    let y = shifted / s as u128;
    Ok(base.decode_signed((y + p - down) % p))
}
