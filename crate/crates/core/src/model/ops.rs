//! im2col-based convolution kernels on (N, C, H, W) tensors.

use ndarray::{s, Array2, Array3, Array4, ArrayView2, ArrayView3, ArrayView4, Axis};
use rayon::prelude::*;

pub type Tensor = Array4<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    /// Output side of a convolution, or `None` when the window does not fit.
    pub fn conv_out(&self, side: usize) -> Option<usize> {
        let padded = side + 2 * self.pad;
        if padded < self.kernel {
            return None;
        }
        Some((padded - self.kernel) / self.stride + 1)
    }

    /// Output side of the matching transposed convolution.
    pub fn deconv_out(&self, side: usize) -> usize {
        (side - 1) * self.stride + self.kernel - 2 * self.pad
    }
}

/// Unfolds `x` (C, H, W) into (C·k·k, Ho·Wo) patch columns.
pub fn im2col(x: ArrayView3<f64>, g: ConvGeom, ho: usize, wo: usize) -> Array2<f64> {
    let (c, h, w) = x.dim();
    let k = g.kernel;
    let mut cols = Array2::zeros((c * k * k, ho * wo));
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ch * k + ky) * k + kx;
                let mut dst = cols.row_mut(row);
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dst[oy * wo + ox] = x[[ch, iy as usize, ix as usize]];
                    }
                }
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatters patch columns back onto a (C, H, W) grid.
pub fn col2im(
    cols: ArrayView2<f64>,
    c: usize,
    h: usize,
    w: usize,
    g: ConvGeom,
    ho: usize,
    wo: usize,
) -> Array3<f64> {
    let k = g.kernel;
    let mut out = Array3::zeros((c, h, w));
    for ch in 0..c {
        for ky in 0..k {
            for kx in 0..k {
                let row = cols.row((ch * k + ky) * k + kx);
                for oy in 0..ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        out[[ch, iy as usize, ix as usize]] += row[oy * wo + ox];
                    }
                }
            }
        }
    }
    out
}

/// Runs `f` on every sample of the batch in parallel and stacks the results
/// in batch order.
pub fn map_batch<F>(x: ArrayView4<f64>, f: F) -> Tensor
where
    F: Fn(usize, ArrayView3<f64>) -> Array3<f64> + Sync,
{
    let n = x.dim().0;
    let outs: Vec<Array3<f64>> = (0..n)
        .into_par_iter()
        .map(|i| f(i, x.index_axis(Axis(0), i)))
        .collect();
    stack(outs)
}

pub fn stack(samples: Vec<Array3<f64>>) -> Tensor {
    let (c, h, w) = samples[0].dim();
    let mut out = Tensor::zeros((samples.len(), c, h, w));
    for (i, s) in samples.into_iter().enumerate() {
        out.index_axis_mut(Axis(0), i).assign(&s);
    }
    out
}

pub fn concat_channels(a: &Tensor, b: &Tensor) -> Tensor {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("matching batch/spatial dims")
}

pub fn split_channels(t: &Tensor, first: usize) -> (Tensor, Tensor) {
    (
        t.slice(s![.., ..first, .., ..]).to_owned(),
        t.slice(s![.., first.., .., ..]).to_owned(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry() {
        let g = ConvGeom {
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        assert_eq!(g.conv_out(256), Some(128));
        assert_eq!(g.conv_out(2), Some(1));
        assert_eq!(g.deconv_out(1), 2);
        assert_eq!(g.deconv_out(128), 256);
        let g1 = ConvGeom { stride: 1, ..g };
        assert_eq!(g1.conv_out(32), Some(31));
        assert_eq!(g1.conv_out(1), None);
    }

    #[test]
    fn col2im_is_adjoint_of_im2col() {
        // <im2col(x), c> == <x, col2im(c)>
        let g = ConvGeom {
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        let x = Array3::from_shape_fn((2, 6, 6), |(c, y, x)| ((c * 36 + y * 6 + x) as f64).sin());
        let (ho, wo) = (3, 3);
        let cols_shape = (2 * 16, ho * wo);
        let c = Array2::from_shape_fn(cols_shape, |(i, j)| ((i * 7 + j) as f64 * 0.3).cos());
        let lhs = (&im2col(x.view(), g, ho, wo) * &c).sum();
        let rhs = (&x * &col2im(c.view(), 2, 6, 6, g, ho, wo)).sum();
        assert!((lhs - rhs).abs() < 1e-10);
    }
}
