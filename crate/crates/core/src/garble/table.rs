/// Zero bytes appended to every encrypted row; checked on decryption.
pub const TAG_LEN: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum GateKind {
    Projection = 1,
    Lookup2 = 2,
}

impl GateKind {
    pub fn from_id(id: u8) -> Option<Self> {
        match id {
            1 => Some(GateKind::Projection),
            2 => Some(GateKind::Lookup2),
            _ => None,
        }
    }
}

/// Ciphertext rows of one projection or two-input lookup gate.
///
/// Rows are stored in color order. A row-reduced projection omits color 0,
/// so row `i` holds color `i + 1`. `in_moduli[1]` is 0 for projections.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GarbledTable {
    pub gate_id: u64,
    pub kind: GateKind,
    pub in_moduli: [u32; 2],
    pub out_modulus: u32,
    pub row_len: u32,
    pub rows: Vec<u8>,
}

impl GarbledTable {
    pub fn row_count(&self) -> usize {
        if self.row_len == 0 {
            0
        } else {
            self.rows.len() / self.row_len as usize
        }
    }

    pub fn row(&self, i: usize) -> Option<&[u8]> {
        let w = self.row_len as usize;
        self.rows.get(i * w..(i + 1) * w)
    }

    pub fn row_reduced(&self) -> bool {
        self.kind == GateKind::Projection && self.row_count() + 1 == self.in_moduli[0] as usize
    }
}
