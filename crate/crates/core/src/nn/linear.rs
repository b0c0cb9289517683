use rayon::prelude::*;

use super::{LayerKind, NnError, Shape};

/// Marks a padding tap in a gather index.
pub const PAD: u32 = u32::MAX;

/// A Dense or Conv2d layer as a matrix product over gathered inputs.
///
/// Output neuron `(o, r)` (channel `o`, pixel `r`) is
/// `sum_k W[o][k] * x[gather[r][k]]`, with padding taps contributing zero.
/// Conv2d uses the im2col gather; Dense is the single-row identity gather.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LinearMap {
    pub out_channels: usize,
    /// Output pixels per channel.
    pub rows: usize,
    /// Inputs per dot product.
    pub cols: usize,
    pub gather: Vec<u32>,
}

impl LinearMap {
    pub fn for_layer(kind: &LayerKind, input: Shape) -> Result<Self, NnError> {
        match *kind {
            LayerKind::Dense { outputs } => Ok(LinearMap {
                out_channels: outputs,
                rows: 1,
                cols: input.len(),
                gather: (0..input.len() as u32).collect(),
            }),
            LayerKind::Conv2d { .. } => conv_as_matmul(kind, input),
            _ => Err(NnError::ShapeMismatch("not a linear layer".into())),
        }
    }

    pub fn output_len(&self) -> usize {
        self.out_channels * self.rows
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.cols
    }

    /// Exact product over the integers.
    pub fn apply_i128(&self, weights: &[i64], x: &[i64]) -> Vec<i128> {
        let mut out = vec![0i128; self.output_len()];
        out.par_chunks_mut(self.rows.max(1))
            .enumerate()
            .for_each(|(o, dst)| {
                let w = &weights[o * self.cols..(o + 1) * self.cols];
                for (r, slot) in dst.iter_mut().enumerate() {
                    let g = &self.gather[r * self.cols..(r + 1) * self.cols];
                    *slot = g
                        .iter()
                        .zip(w)
                        .filter(|(&i, _)| i != PAD)
                        .map(|(&i, &wk)| wk as i128 * x[i as usize] as i128)
                        .sum();
                }
            });
        out
    }

    /// Product modulo `p` with weights already reduced mod `p`.
    ///
    /// Accumulates in 64 bits and reduces once per block of terms that
    /// cannot overflow, which for moduli below 2^16 is once per dot product.
    pub fn apply_mod(&self, weights: &[u32], x: &[u32], p: u32, out: &mut [u32]) {
        let pm = p as u64 - 1;
        let block = ((u64::MAX - pm) / (pm * pm).max(1)).max(1) as usize;
        out.par_chunks_mut(self.rows.max(1))
            .enumerate()
            .for_each(|(o, dst)| {
                let w = &weights[o * self.cols..(o + 1) * self.cols];
                for (r, slot) in dst.iter_mut().enumerate() {
                    let g = &self.gather[r * self.cols..(r + 1) * self.cols];
                    let mut acc = 0u64;
                    for (gc, wc) in g.chunks(block).zip(w.chunks(block)) {
                        for (&i, &wk) in gc.iter().zip(wc) {
                            if i != PAD {
                                acc += wk as u64 * x[i as usize] as u64;
                            }
                        }
                        acc %= p as u64;
                    }
                    *slot = acc as u32;
                }
            });
    }
}

/// Output spatial size of a convolution, if the filter fits.
pub fn conv_output_dim(size: usize, filter: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if filter == 0 || stride == 0 || padded < filter {
        return None;
    }
    Some((padded - filter) / stride + 1)
}

/// im2col gather for a Conv2d layer over a CHW input.
///
/// Row `r` is output pixel `(oy, ox)`; column `k` is `(c, fy, fx)` in
/// row-major order, matching the OIHW weight layout.
pub fn conv_as_matmul(kind: &LayerKind, input: Shape) -> Result<LinearMap, NnError> {
    let LayerKind::Conv2d {
        in_channels,
        out_channels,
        filter,
        stride,
        padding,
    } = *kind
    else {
        return Err(NnError::ShapeMismatch("not a convolution".into()));
    };
    if input.channels != in_channels {
        return Err(NnError::ShapeMismatch(format!(
            "convolution expects {in_channels} input channels, got {}",
            input.channels
        )));
    }
    let (oh, ow) = match (
        conv_output_dim(input.height, filter, stride, padding),
        conv_output_dim(input.width, filter, stride, padding),
    ) {
        (Some(h), Some(w)) => (h, w),
        _ => {
            return Err(NnError::ShapeMismatch(format!(
                "filter {filter} stride {stride} padding {padding} does not fit {}x{}",
                input.height, input.width
            )))
        }
    };
    let cols = in_channels * filter * filter;
    let mut gather = Vec::with_capacity(oh * ow * cols);
    for oy in 0..oh {
        for ox in 0..ow {
            for c in 0..in_channels {
                for fy in 0..filter {
                    for fx in 0..filter {
                        let y = (oy * stride + fy) as isize - padding as isize;
                        let x = (ox * stride + fx) as isize - padding as isize;
                        if y < 0 || x < 0 || y >= input.height as isize || x >= input.width as isize {
                            gather.push(PAD);
                        } else {
                            let idx = (c * input.height + y as usize) * input.width + x as usize;
                            gather.push(idx as u32);
                        }
                    }
                }
            }
        }
    }
    Ok(LinearMap {
        out_channels,
        rows: oh * ow,
        cols,
        gather,
    })
}

/// Textbook convolution loop; the reference for the matmul path.
pub fn direct_conv(kind: &LayerKind, input: Shape, weights: &[i64], x: &[i64]) -> Result<Vec<i128>, NnError> {
    let LayerKind::Conv2d {
        in_channels,
        out_channels,
        filter,
        stride,
        padding,
    } = *kind
    else {
        return Err(NnError::ShapeMismatch("not a convolution".into()));
    };
    let out = kind.output_shape(input)?;
    let mut y = vec![0i128; out.len()];
    for o in 0..out_channels {
        for oy in 0..out.height {
            for ox in 0..out.width {
                let mut acc = 0i128;
                for c in 0..in_channels {
                    for fy in 0..filter {
                        for fx in 0..filter {
                            let iy = (oy * stride + fy) as isize - padding as isize;
                            let ix = (ox * stride + fx) as isize - padding as isize;
                            if iy < 0 || ix < 0 || iy >= input.height as isize || ix >= input.width as isize {
                                continue;
                            }
                            let w = weights[((o * in_channels + c) * filter + fy) * filter + fx];
                            let v = x[(c * input.height + iy as usize) * input.width + ix as usize];
                            acc += w as i128 * v as i128;
                        }
                    }
                }
                y[(o * out.height + oy) * out.width + ox] = acc;
            }
        }
    }
    Ok(y)
}
