//! im2col based 2-d convolution kernels shared by the strided and the
//! transposed convolution ops.

use super::tensor::Real;

/// Geometry of a plain convolution mapping `h×w` inputs to `oh×ow` outputs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub channels: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, h: usize, w: usize, k: usize, stride: usize, pad: usize) -> Self {
        assert!(h + 2 * pad >= k && w + 2 * pad >= k, "kernel larger than padded input");
        ConvGeom {
            channels,
            h,
            w,
            k,
            stride,
            pad,
            oh: (h + 2 * pad - k) / stride + 1,
            ow: (w + 2 * pad - k) / stride + 1,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.k * self.k
    }
}

/// Unfolds an NCHW batch into a `(C·k·k) × (N·oh·ow)` column matrix.
pub fn im2col<T: Real>(x: &[T], n: usize, g: &ConvGeom) -> Vec<T> {
    let cols_n = n * g.oh * g.ow;
    let mut cols = vec![T::zero(); g.col_rows() * cols_n];
    for c in 0..g.channels {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let dst = &mut cols[row * cols_n..(row + 1) * cols_n];
                for b in 0..n {
                    let plane = &x[(b * g.channels + c) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        let base = (b * g.oh + oy) * g.ow;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let src_row = &plane[iy as usize * g.w..][..g.w];
                        for ox in 0..g.ow {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[base + ox] = src_row[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters columns back into an NCHW batch, summing
/// overlapping contributions.
pub fn col2im<T: Real>(cols: &[T], n: usize, g: &ConvGeom) -> Vec<T> {
    let cols_n = n * g.oh * g.ow;
    let mut x = vec![T::zero(); n * g.channels * g.h * g.w];
    for c in 0..g.channels {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (c * g.k + ky) * g.k + kx;
                let src = &cols[row * cols_n..(row + 1) * cols_n];
                for b in 0..n {
                    let plane = &mut x[(b * g.channels + c) * g.h * g.w..][..g.h * g.w];
                    for oy in 0..g.oh {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let base = (b * g.oh + oy) * g.ow;
                        let dst_row = &mut plane[iy as usize * g.w..][..g.w];
                        for ox in 0..g.ow {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst_row[ix as usize] += src[base + ox];
                            }
                        }
                    }
                }
            }
        }
    }
    x
}
