//! Binary container for garbled models and label tensors.
//!
//! All integers are little-endian. A model container is
//!
//! ```text
//! magic[8] version:u16 hash_alg:u8 row_reduction:u8 lambda:u16 salt[32]
//! base_len:u16 moduli:u32* input:(u32 u32 u32) layer_count:u32
//! (tag:u8 body_len:u64 body)* sha256[32]
//! ```
//!
//! Linear layer bodies carry their shape parameters and weights as `i64`.
//! Gadget layer bodies carry the layer parameters, the first gadget
//! instance and, per gadget, its tables:
//! `gate_id:u64 kind:u8 in:u32 u32 out:u32 row_len:u32 rows:u32 bytes`.
//! The trailing digest covers every preceding byte.

use super::garbled::gadget_spec;
use super::{GarbledLayer, GarbledModel, LayerKind, NnError, Shape};
use crate::gadgets::GarbledGadget;
use crate::garble::{sha256, GarbleError, GarbledTable, GateKind, HashAlg, LabelTensor, PublicParams};
use crate::garble::{component_width, MAX_LAMBDA, MIN_LAMBDA};
use crate::rns::RnsBase;

pub const CONTAINER_MAGIC: &[u8; 8] = b"RNSGCMDL";
pub const LABELS_MAGIC: &[u8; 8] = b"RNSGCLBL";
pub const CONTAINER_VERSION: u16 = 1;
/// Gate id reported when a container's digest does not match its contents.
pub const CONTAINER_CHECK: u64 = u64::MAX;

const TAG_DENSE: u8 = 1;
const TAG_CONV: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_SCALE: u8 = 4;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u16(&mut self, v: u16) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn usize(&mut self, v: usize) {
        self.u32(v as u32);
    }
    fn bytes(&mut self, b: &[u8]) {
        self.0.extend_from_slice(b);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

fn malformed(msg: impl Into<String>) -> NnError {
    NnError::Malformed(msg.into())
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(e) => {
                let s = &self.buf[self.pos..e];
                self.pos = e;
                Ok(s)
            }
            None => Err(malformed(format!("truncated at byte {}", self.pos))),
        }
    }
    fn array<const N: usize>(&mut self) -> Result<[u8; N], NnError> {
        Ok(self.take(N)?.try_into().unwrap())
    }
    fn u8(&mut self) -> Result<u8, NnError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn usize(&mut self) -> Result<usize, NnError> {
        Ok(self.u32()? as usize)
    }
    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    fn finish(&self) -> Result<(), NnError> {
        if self.remaining() != 0 {
            return Err(malformed(format!("{} trailing bytes", self.remaining())));
        }
        Ok(())
    }
}

fn write_weights(w: &mut Writer, weights: &[i64]) {
    w.usize(weights.len());
    for &v in weights {
        w.bytes(&v.to_le_bytes());
    }
}

fn read_weights(r: &mut Reader) -> Result<Vec<i64>, NnError> {
    let n = r.usize()?;
    if n.saturating_mul(8) > r.remaining() {
        return Err(malformed("weight count exceeds container"));
    }
    (0..n).map(|_| Ok(i64::from_le_bytes(r.array()?))).collect()
}

fn write_table(w: &mut Writer, t: &GarbledTable) {
    w.u64(t.gate_id);
    w.u8(t.kind as u8);
    w.u32(t.in_moduli[0]);
    w.u32(t.in_moduli[1]);
    w.u32(t.out_modulus);
    w.u32(t.row_len);
    w.usize(t.row_count());
    w.bytes(&t.rows);
}

fn read_table(r: &mut Reader) -> Result<GarbledTable, NnError> {
    let gate_id = r.u64()?;
    let kind = GateKind::from_id(r.u8()?).ok_or_else(|| malformed("unknown gate kind"))?;
    let in_moduli = [r.u32()?, r.u32()?];
    let out_modulus = r.u32()?;
    let row_len = r.u32()?;
    let rows = r.usize()?;
    let len = (row_len as usize)
        .checked_mul(rows)
        .ok_or_else(|| malformed("table size overflows"))?;
    Ok(GarbledTable {
        gate_id,
        kind,
        in_moduli,
        out_modulus,
        row_len,
        rows: r.take(len)?.to_vec(),
    })
}

fn write_layer(w: &mut Writer, layer: &GarbledLayer) {
    let mut body = Writer(Vec::new());
    let tag = match layer {
        GarbledLayer::Linear { kind, weights } => {
            let tag = match *kind {
                LayerKind::Dense { outputs } => {
                    body.usize(outputs);
                    TAG_DENSE
                }
                LayerKind::Conv2d {
                    in_channels,
                    out_channels,
                    filter,
                    stride,
                    padding,
                } => {
                    for v in [in_channels, out_channels, filter, stride, padding] {
                        body.usize(v);
                    }
                    TAG_CONV
                }
                _ => unreachable!("linear layer kind"),
            };
            write_weights(&mut body, weights);
            tag
        }
        GarbledLayer::Gadgets {
            kind,
            first_instance,
            gadgets,
        } => {
            let tag = match *kind {
                LayerKind::Relu => TAG_RELU,
                LayerKind::Scale { factor, steps } => {
                    body.u64(factor);
                    body.u32(steps);
                    TAG_SCALE
                }
                _ => unreachable!("gadget layer kind"),
            };
            body.u64(*first_instance);
            body.usize(gadgets.len());
            for g in gadgets {
                body.usize(g.tables.len());
                for t in &g.tables {
                    write_table(&mut body, t);
                }
            }
            tag
        }
    };
    w.u8(tag);
    w.u64(body.0.len() as u64);
    w.bytes(&body.0);
}

fn read_layer(r: &mut Reader, base: &RnsBase) -> Result<GarbledLayer, NnError> {
    let tag = r.u8()?;
    let len = r.u64()?;
    let body = r.take(usize::try_from(len).map_err(|_| malformed("layer length"))?)?;
    let mut b = Reader::new(body);
    let layer = match tag {
        TAG_DENSE => {
            let kind = LayerKind::Dense { outputs: b.usize()? };
            GarbledLayer::Linear {
                kind,
                weights: read_weights(&mut b)?,
            }
        }
        TAG_CONV => {
            let kind = LayerKind::conv(b.usize()?, b.usize()?, b.usize()?, b.usize()?, b.usize()?);
            GarbledLayer::Linear {
                kind,
                weights: read_weights(&mut b)?,
            }
        }
        TAG_RELU | TAG_SCALE => {
            let kind = if tag == TAG_RELU {
                LayerKind::Relu
            } else {
                LayerKind::Scale {
                    factor: b.u64()?,
                    steps: b.u32()?,
                }
            };
            let spec = gadget_spec(&kind, base)?.expect("gadget layer");
            let first_instance = b.u64()?;
            let count = b.usize()?;
            let mut gadgets = Vec::with_capacity(count.min(b.remaining()));
            for _ in 0..count {
                let tables = b.usize()?;
                let tables = (0..tables)
                    .map(|_| read_table(&mut b))
                    .collect::<Result<Vec<_>, _>>()?;
                gadgets.push(GarbledGadget {
                    kind: spec.kind(),
                    tables,
                    input_moduli: spec.input_moduli(),
                    output_moduli: spec.output_moduli(),
                });
            }
            GarbledLayer::Gadgets {
                kind,
                first_instance,
                gadgets,
            }
        }
        t => return Err(malformed(format!("unknown layer tag {t}"))),
    };
    b.finish()?;
    Ok(layer)
}

impl GarbledModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(Vec::new());
        w.bytes(CONTAINER_MAGIC);
        w.u16(CONTAINER_VERSION);
        w.u8(self.params.hash_alg as u8);
        w.u8(self.params.row_reduction as u8);
        w.u16(self.params.lambda);
        w.bytes(&self.params.salt);
        w.u16(self.base.len() as u16);
        for &p in self.base.moduli() {
            w.u32(p);
        }
        for v in [self.input.channels, self.input.height, self.input.width] {
            w.usize(v);
        }
        w.usize(self.layers.len());
        for l in &self.layers {
            write_layer(&mut w, l);
        }
        let digest = sha256(&[&w.0]);
        w.bytes(&digest);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NnError> {
        let mut r = Reader::new(bytes);
        if r.take(8)? != CONTAINER_MAGIC {
            return Err(malformed("not a garbled model container"));
        }
        let version = r.u16()?;
        if version != CONTAINER_VERSION {
            return Err(NnError::VersionMismatch {
                expected: CONTAINER_VERSION,
                got: version,
            });
        }
        if bytes.len() < 32 + r.pos {
            return Err(malformed("truncated container"));
        }
        let (content, digest) = bytes.split_at(bytes.len() - 32);
        if sha256(&[content]) != digest {
            return Err(GarbleError::AuthFailure {
                gate_id: CONTAINER_CHECK,
            }
            .into());
        }
        let mut r = Reader {
            buf: content,
            pos: r.pos,
        };
        let hash_alg = HashAlg::from_id(r.u8()?).ok_or_else(|| malformed("unknown hash algorithm"))?;
        let row_reduction = match r.u8()? {
            0 => false,
            1 => true,
            _ => return Err(malformed("row reduction flag")),
        };
        let lambda = r.u16()?;
        if !(MIN_LAMBDA..=MAX_LAMBDA).contains(&lambda) {
            return Err(malformed(format!("lambda {lambda}")));
        }
        let salt = r.array::<32>()?;
        let k = r.u16()? as usize;
        let moduli = (0..k).map(|_| r.u32()).collect::<Result<Vec<_>, _>>()?;
        let base = RnsBase::new(&moduli)?;
        let input = Shape::new(r.usize()?, r.usize()?, r.usize()?);
        let count = r.usize()?;
        let layers = (0..count)
            .map(|_| read_layer(&mut r, &base))
            .collect::<Result<Vec<_>, _>>()?;
        r.finish()?;
        Ok(GarbledModel {
            params: PublicParams {
                lambda,
                salt,
                row_reduction,
                hash_alg,
            },
            base,
            input,
            layers,
        })
    }
}

/// Serializes label tensors: magic, version, count, then per tensor
/// `modulus:u32 wires:u32 components:u32` and fixed-width components.
pub fn write_labels(tensors: &[LabelTensor]) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.bytes(LABELS_MAGIC);
    w.u16(CONTAINER_VERSION);
    w.usize(tensors.len());
    for t in tensors {
        w.u32(t.modulus());
        w.usize(t.wire_count());
        w.usize(t.component_count());
        let width = component_width(t.modulus());
        for &v in t.data() {
            w.bytes(&v.to_le_bytes()[..width]);
        }
    }
    w.0
}

pub fn read_labels(bytes: &[u8]) -> Result<Vec<LabelTensor>, NnError> {
    let mut r = Reader::new(bytes);
    if r.take(8)? != LABELS_MAGIC {
        return Err(malformed("not a label file"));
    }
    let version = r.u16()?;
    if version != CONTAINER_VERSION {
        return Err(NnError::VersionMismatch {
            expected: CONTAINER_VERSION,
            got: version,
        });
    }
    let count = r.usize()?;
    let mut out = Vec::with_capacity(count.min(64));
    for _ in 0..count {
        let modulus = r.u32()?;
        if modulus < 2 {
            return Err(malformed("modulus below 2"));
        }
        let wires = r.usize()?;
        let comps = r.usize()?;
        let width = component_width(modulus);
        let len = wires
            .checked_mul(comps)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| malformed("tensor size overflows"))?;
        let data = r
            .take(len)?
            .chunks_exact(width)
            .map(|ch| {
                let mut buf = [0u8; 4];
                buf[..width].copy_from_slice(ch);
                u32::from_le_bytes(buf)
            })
            .collect();
        out.push(LabelTensor::from_raw(modulus, wires, comps, data)?);
    }
    r.finish()?;
    Ok(out)
}
