use super::context::{Domain, GarblingContext};
use super::hash::{hash_to_label, row_pad};
use super::label::Label;
use super::table::{GarbledTable, GateKind, TAG_LEN};
use super::{gate_id, Fancy, GarbleError, HasModulus, Result};

/// Garbler view of a wire: its zero label `l_0`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WireSecrets {
    pub zero: Label,
}

impl HasModulus for WireSecrets {
    fn modulus(&self) -> u32 {
        self.zero.modulus()
    }
}

impl GarblingContext {
    /// `l_0 + a * R`.
    pub fn encode(&self, wire: &WireSecrets, a: u32) -> Result<Label> {
        let p = wire.modulus();
        if a >= p {
            return Err(GarbleError::OutOfRange {
                value: a as u64,
                modulus: p,
            });
        }
        wire.zero.add_scaled(&self.offset(p)?.label, a)
    }

    /// Recovers `a` from `l_0 + a * R`, rejecting labels off the line.
    pub fn decode(&self, wire: &WireSecrets, label: &Label) -> Result<u32> {
        let p = wire.modulus();
        if label.modulus() != p || label.len() != wire.zero.len() {
            return Err(GarbleError::ModulusMismatch {
                left: p,
                right: label.modulus(),
            });
        }
        let off = self.offset(p)?;
        let diff = (label.color() as u64 + p as u64 - wire.zero.color() as u64) % p as u64;
        let a = (diff * off.color_inv as u64 % p as u64) as u32;
        if &wire.zero.add_scaled(&off.label, a)? != label {
            return Err(GarbleError::DecodeFailure);
        }
        Ok(a)
    }

    /// Re-bases a wire so it carries `a + c`; no ciphertexts.
    pub fn cadd(&self, wire: &WireSecrets, c: u32) -> Result<WireSecrets> {
        let p = wire.modulus();
        let shift = self.offset(p)?.label.cmul(c % p);
        Ok(WireSecrets {
            zero: wire.zero.sub(&shift)?,
        })
    }
}

/// Garbles the gates of one gadget instance, collecting their tables.
pub struct Garbler<'a> {
    ctx: &'a GarblingContext,
    instance: u64,
    next_gate: u32,
    tables: Vec<GarbledTable>,
}

impl<'a> Garbler<'a> {
    pub fn new(ctx: &'a GarblingContext, instance: u64) -> Self {
        Garbler {
            ctx,
            instance,
            next_gate: 0,
            tables: Vec::new(),
        }
    }

    pub fn context(&self) -> &GarblingContext {
        self.ctx
    }

    pub fn finish(self) -> Vec<GarbledTable> {
        self.tables
    }

    fn next_gate_id(&mut self) -> u64 {
        let id = gate_id(self.instance, self.next_gate);
        self.next_gate += 1;
        id
    }

    fn encrypt_row(&self, gid: u64, inputs: &[&Label], out: &Label, dst: &mut [u8]) {
        let mut plain = Vec::with_capacity(dst.len());
        out.write_bytes(&mut plain);
        plain.extend_from_slice(&[0u8; TAG_LEN]);
        let pad = row_pad(&self.ctx.public().salt, gid, inputs, dst.len());
        for ((d, p), k) in dst.iter_mut().zip(plain).zip(pad) {
            *d = p ^ k;
        }
    }
}

impl Fancy for Garbler<'_> {
    type Item = WireSecrets;

    fn constant(&mut self, value: u32, modulus: u32) -> Result<WireSecrets> {
        // the evaluator holds the all-zero label for constants
        let n = self.ctx.public().component_count(modulus);
        let r = &self.ctx.offset(modulus)?.label;
        Ok(WireSecrets {
            zero: Label::zero(modulus, n).sub(&r.cmul(value % modulus))?,
        })
    }

    fn add(&mut self, x: &WireSecrets, y: &WireSecrets) -> Result<WireSecrets> {
        Ok(WireSecrets {
            zero: x.zero.add(&y.zero)?,
        })
    }

    fn cmul(&mut self, x: &WireSecrets, c: u32) -> Result<WireSecrets> {
        Ok(WireSecrets {
            zero: x.zero.cmul(c),
        })
    }

    fn cadd(&mut self, x: &WireSecrets, c: u32) -> Result<WireSecrets> {
        self.ctx.cadd(x, c)
    }

    fn proj(&mut self, x: &WireSecrets, q: u32, phi: &dyn Fn(u32) -> u32) -> Result<WireSecrets> {
        let p = x.modulus();
        let gid = self.next_gate_id();
        let public = self.ctx.public();
        let rr = public.row_reduction;
        let r_in = self.ctx.offset(p)?;
        let r_out = &self.ctx.offset(q)?.label;
        let n_q = public.component_count(q);
        let out_zero = if rr {
            // the input value whose label has color 0
            let a0 = ((p - x.zero.color()) as u64 * r_in.color_inv as u64 % p as u64) as u32;
            let l = x.zero.add_scaled(&r_in.label, a0)?;
            let c = hash_to_label(&public.salt, gid, &[&l], q, n_q);
            c.sub(&r_out.cmul(phi(a0) % q))?
        } else {
            self.ctx.fresh_label(Domain::Gate, gid, q)
        };
        let row_len = Label::zero(q, n_q).encoded_len() + TAG_LEN;
        let nrows = p as usize - rr as usize;
        let mut rows = vec![0u8; nrows * row_len];
        let mut label = x.zero.clone();
        for a in 0..p {
            let color = label.color() as usize;
            if !(rr && color == 0) {
                let out = out_zero.add_scaled(r_out, phi(a) % q)?;
                let slot = color - rr as usize;
                self.encrypt_row(gid, &[&label], &out, &mut rows[slot * row_len..(slot + 1) * row_len]);
            }
            label.add_assign_unchecked(&r_in.label);
        }
        self.tables.push(GarbledTable {
            gate_id: gid,
            kind: GateKind::Projection,
            in_moduli: [p, 0],
            out_modulus: q,
            row_len: row_len as u32,
            rows,
        });
        Ok(WireSecrets { zero: out_zero })
    }

    fn lookup2(
        &mut self,
        x: &WireSecrets,
        y: &WireSecrets,
        m: u32,
        psi: &dyn Fn(u32, u32) -> u32,
    ) -> Result<WireSecrets> {
        let (p, q) = (x.modulus(), y.modulus());
        let gid = self.next_gate_id();
        let r_x = &self.ctx.offset(p)?.label;
        let r_y = &self.ctx.offset(q)?.label;
        let r_out = &self.ctx.offset(m)?.label;
        let out_zero = self.ctx.fresh_label(Domain::Gate, gid, m);
        let row_len = out_zero.encoded_len() + TAG_LEN;
        let mut rows = vec![0u8; p as usize * q as usize * row_len];
        let mut lx = x.zero.clone();
        for a in 0..p {
            let mut ly = y.zero.clone();
            for b in 0..q {
                let out = out_zero.add_scaled(r_out, psi(a, b) % m)?;
                let slot = lx.color() as usize * q as usize + ly.color() as usize;
                self.encrypt_row(gid, &[&lx, &ly], &out, &mut rows[slot * row_len..(slot + 1) * row_len]);
                ly.add_assign_unchecked(r_y);
            }
            lx.add_assign_unchecked(r_x);
        }
        self.tables.push(GarbledTable {
            gate_id: gid,
            kind: GateKind::Lookup2,
            in_moduli: [p, q],
            out_modulus: m,
            row_len: row_len as u32,
            rows,
        });
        Ok(WireSecrets { zero: out_zero })
    }
}
