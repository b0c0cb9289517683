//! Hashing of labels into row pads and derived labels.

use sha2::{Digest, Sha256};

use super::label::Label;

/// Hash algorithm identifier carried in the container header.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum HashAlg {
    Sha256 = 1,
}

impl HashAlg {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(HashAlg::Sha256),
            _ => None,
        }
    }
}

pub(crate) fn sha256(parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

fn gate_digest(salt: &[u8; 32], gate_id: u64, inputs: &[&Label]) -> [u8; 32] {
    let mut buf = Vec::with_capacity(48 + inputs.iter().map(|l| l.encoded_len() + 4).sum::<usize>());
    buf.extend_from_slice(salt);
    buf.extend_from_slice(&gate_id.to_le_bytes());
    for l in inputs {
        buf.extend_from_slice(&l.modulus().to_le_bytes());
        l.write_bytes(&mut buf);
    }
    sha256(&[&buf])
}

/// Pseudorandom pad of `len` bytes keyed by the input labels and gate id.
pub(crate) fn row_pad(salt: &[u8; 32], gate_id: u64, inputs: &[&Label], len: usize) -> Vec<u8> {
    let d = gate_digest(salt, gate_id, inputs);
    let mut out = Vec::with_capacity(len.div_ceil(32) * 32);
    out.extend_from_slice(&d);
    let mut ctr = 1u32;
    while out.len() < len {
        out.extend_from_slice(&sha256(&[&d, &ctr.to_le_bytes()]));
        ctr += 1;
    }
    out.truncate(len);
    out
}

/// Label in `Z_q^n` derived from the input labels; used for the row that
/// row reduction leaves out of the table.
pub(crate) fn hash_to_label(
    salt: &[u8; 32],
    gate_id: u64,
    inputs: &[&Label],
    q: u32,
    n: usize,
) -> Label {
    let pad = row_pad(salt, gate_id, inputs, 8 * n);
    let comps = pad
        .chunks_exact(8)
        .map(|ch| (u64::from_le_bytes(ch.try_into().unwrap()) % q as u64) as u32)
        .collect();
    Label::from_raw(q, comps)
}
