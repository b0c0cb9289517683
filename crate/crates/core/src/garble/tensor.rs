use super::label::Label;
use super::{GarbleError, Result};

/// Labels of many wires sharing one modulus.
///
/// Storage is component-major: all wires' component 0, then all wires'
/// component 1, and so on. A linear layer then becomes one integer matrix
/// product per component plane.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelTensor {
    modulus: u32,
    wire_count: usize,
    component_count: usize,
    data: Vec<u32>,
}

impl LabelTensor {
    pub fn zeros(modulus: u32, wire_count: usize, component_count: usize) -> Self {
        LabelTensor {
            modulus,
            wire_count,
            component_count,
            data: vec![0; wire_count * component_count],
        }
    }

    pub fn from_raw(
        modulus: u32,
        wire_count: usize,
        component_count: usize,
        data: Vec<u32>,
    ) -> Result<Self> {
        if data.len() != wire_count * component_count {
            return Err(GarbleError::Malformed(format!(
                "tensor of {wire_count}x{component_count} labels given {} components",
                data.len()
            )));
        }
        if let Some(&v) = data.iter().find(|&&v| v >= modulus) {
            return Err(GarbleError::OutOfRange {
                value: v as u64,
                modulus,
            });
        }
        Ok(LabelTensor {
            modulus,
            wire_count,
            component_count,
            data,
        })
    }

    pub fn from_labels(modulus: u32, component_count: usize, labels: &[Label]) -> Result<Self> {
        let mut t = LabelTensor::zeros(modulus, labels.len(), component_count);
        for (w, l) in labels.iter().enumerate() {
            t.set_label(w, l)?;
        }
        Ok(t)
    }

    pub fn modulus(&self) -> u32 {
        self.modulus
    }

    pub fn wire_count(&self) -> usize {
        self.wire_count
    }

    pub fn component_count(&self) -> usize {
        self.component_count
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn label(&self, w: usize) -> Label {
        let comps = (0..self.component_count)
            .map(|c| self.data[c * self.wire_count + w])
            .collect();
        Label::from_raw(self.modulus, comps)
    }

    pub fn set_label(&mut self, w: usize, l: &Label) -> Result<()> {
        if l.modulus() != self.modulus || l.len() != self.component_count {
            return Err(GarbleError::ModulusMismatch {
                left: self.modulus,
                right: l.modulus(),
            });
        }
        for (c, &v) in l.components().iter().enumerate() {
            self.data[c * self.wire_count + w] = v;
        }
        Ok(())
    }

    pub fn plane(&self, c: usize) -> &[u32] {
        &self.data[c * self.wire_count..(c + 1) * self.wire_count]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [u32] {
        &mut self.data[c * self.wire_count..(c + 1) * self.wire_count]
    }

    pub fn planes(&self) -> impl Iterator<Item = &[u32]> {
        self.data.chunks_exact(self.wire_count.max(1)).take(self.component_count)
    }

    /// Builds a tensor plane by plane from a per-plane map over the input planes.
    pub fn map_planes(
        &self,
        out_wires: usize,
        f: impl Fn(&[u32], &mut [u32]) + Sync,
    ) -> LabelTensor {
        let mut out = LabelTensor::zeros(self.modulus, out_wires, self.component_count);
        if out_wires > 0 {
            for (c, dst) in out.data.chunks_exact_mut(out_wires).enumerate() {
                f(self.plane(c), dst);
            }
        }
        out
    }
}
