use super::context::PublicParams;
use super::hash::{hash_to_label, row_pad};
use super::label::Label;
use super::table::{GarbledTable, GateKind, TAG_LEN};
use super::{gate_id, Fancy, GarbleError, Result};

/// Evaluates one gadget instance, consuming its tables in gate order.
pub struct Evaluator<'a> {
    params: &'a PublicParams,
    instance: u64,
    next_gate: u32,
    tables: std::slice::Iter<'a, GarbledTable>,
}

impl<'a> Evaluator<'a> {
    pub fn new(params: &'a PublicParams, instance: u64, tables: &'a [GarbledTable]) -> Self {
        Evaluator {
            params,
            instance,
            next_gate: 0,
            tables: tables.iter(),
        }
    }

    /// Tables not consumed yet; a well-formed gadget leaves none.
    pub fn remaining(&self) -> usize {
        self.tables.len()
    }

    fn next_table(
        &mut self,
        kind: GateKind,
        in_moduli: [u32; 2],
        out_modulus: u32,
    ) -> Result<(u64, &'a GarbledTable)> {
        let gid = gate_id(self.instance, self.next_gate);
        self.next_gate += 1;
        let table = self
            .tables
            .next()
            .ok_or(GarbleError::MissingTable { gate_id: gid })?;
        if table.gate_id != gid
            || table.kind != kind
            || table.in_moduli != in_moduli
            || table.out_modulus != out_modulus
        {
            return Err(GarbleError::AuthFailure { gate_id: gid });
        }
        Ok((gid, table))
    }

    fn decrypt_row(
        &self,
        gid: u64,
        table: &GarbledTable,
        slot: usize,
        inputs: &[&Label],
    ) -> Result<Label> {
        let q = table.out_modulus;
        let n = self.params.component_count(q);
        let row = table
            .row(slot)
            .ok_or(GarbleError::AuthFailure { gate_id: gid })?;
        let pad = row_pad(&self.params.salt, gid, inputs, row.len());
        let plain: Vec<u8> = row.iter().zip(pad).map(|(r, k)| r ^ k).collect();
        let body = plain.len().checked_sub(TAG_LEN).ok_or(GarbleError::AuthFailure { gate_id: gid })?;
        if plain[body..].iter().any(|&b| b != 0) {
            return Err(GarbleError::AuthFailure { gate_id: gid });
        }
        Label::from_bytes(q, n, &plain[..body]).map_err(|_| GarbleError::AuthFailure { gate_id: gid })
    }

    fn check_label(&self, x: &Label) -> Result<()> {
        if x.len() != self.params.component_count(x.modulus()) {
            return Err(GarbleError::Malformed(format!(
                "label for modulus {} has {} components",
                x.modulus(),
                x.len()
            )));
        }
        Ok(())
    }
}

impl Fancy for Evaluator<'_> {
    type Item = Label;

    fn constant(&mut self, _value: u32, modulus: u32) -> Result<Label> {
        Ok(Label::zero(modulus, self.params.component_count(modulus)))
    }

    fn add(&mut self, x: &Label, y: &Label) -> Result<Label> {
        x.add(y)
    }

    fn cmul(&mut self, x: &Label, c: u32) -> Result<Label> {
        Ok(x.cmul(c))
    }

    fn cadd(&mut self, x: &Label, _c: u32) -> Result<Label> {
        Ok(x.clone())
    }

    fn proj(&mut self, x: &Label, q: u32, _phi: &dyn Fn(u32) -> u32) -> Result<Label> {
        self.check_label(x)?;
        let (gid, table) = self.next_table(GateKind::Projection, [x.modulus(), 0], q)?;
        let color = x.color() as usize;
        if self.params.row_reduction {
            if color == 0 {
                let n = self.params.component_count(q);
                return Ok(hash_to_label(&self.params.salt, gid, &[x], q, n));
            }
            self.decrypt_row(gid, table, color - 1, &[x])
        } else {
            self.decrypt_row(gid, table, color, &[x])
        }
    }

    fn lookup2(
        &mut self,
        x: &Label,
        y: &Label,
        m: u32,
        _psi: &dyn Fn(u32, u32) -> u32,
    ) -> Result<Label> {
        self.check_label(x)?;
        self.check_label(y)?;
        let (gid, table) = self.next_table(GateKind::Lookup2, [x.modulus(), y.modulus()], m)?;
        let slot = x.color() as usize * y.modulus() as usize + y.color() as usize;
        self.decrypt_row(gid, table, slot, &[x, y])
    }
}
