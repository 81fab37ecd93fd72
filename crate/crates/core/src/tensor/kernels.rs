//! Raw numeric kernels on flat row-major buffers. All kernels accumulate
//! into their output so reverse rules can sum contributions directly.

use super::Real;
use crate::error::{param_err, shape_err, Result};

/// Dot product with independent partial sums so the loop vectorizes.
#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// `y += alpha · x`
#[inline]
pub(crate) fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += alpha * xv;
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`
pub(crate) fn matmul_acc<T: Real>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    if n == 1 {
        for i in 0..m {
            c[i] += dot(&a[i * k..(i + 1) * k], &b[..k]);
        }
        return;
    }
    for i in 0..m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            axpy(av, &b[p * n..(p + 1) * n], c_row);
        }
    }
}

/// `c[m×k] += g[m×n] · b[k×n]ᵀ`
pub(crate) fn matmul_a_bt_acc<T: Real>(g: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    if n == 1 {
        for i in 0..m {
            axpy(g[i], &b[..k], &mut c[i * k..(i + 1) * k]);
        }
        return;
    }
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            c[i * k + p] += dot(g_row, &b[p * n..(p + 1) * n]);
        }
    }
}

/// `c[k×n] += a[m×k]ᵀ · g[m×n]`
pub(crate) fn matmul_at_b_acc<T: Real>(a: &[T], g: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    if n == 1 {
        for i in 0..m {
            if g[i] != T::zero() {
                axpy(g[i], &a[i * k..(i + 1) * k], &mut c[..k]);
            }
        }
        return;
    }
    for i in 0..m {
        let g_row = &g[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == T::zero() {
                continue;
            }
            axpy(av, g_row, &mut c[p * n..(p + 1) * n]);
        }
    }
}

/// Output extent of a strided convolution along one axis.
pub fn conv_output_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(param_err!("stride must be at least 1"));
    }
    if kernel == 0 || kernel > input + 2 * padding {
        return Err(shape_err!(
            "kernel {kernel} does not fit input {input} with padding {padding}"
        ));
    }
    Ok((input + 2 * padding - kernel) / stride + 1)
}

/// Output extent of a transposed convolution along one axis.
pub fn deconv_output_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<usize> {
    if stride == 0 {
        return Err(param_err!("stride must be at least 1"));
    }
    if output_padding >= stride {
        return Err(param_err!(
            "output_padding {output_padding} must be smaller than stride {stride}"
        ));
    }
    let full = (input - 1) * stride + kernel + output_padding;
    if full <= 2 * padding {
        return Err(shape_err!("padding {padding} consumes the whole output"));
    }
    Ok(full - 2 * padding)
}

/// Geometry of a forward convolution `x[c_in×h×w] → y[c_out×h_out×w_out]`.
/// A transposed convolution uses the same geometry with the roles of `x`
/// and `y` swapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
    pub h_out: usize,
    pub w_out: usize,
}

impl ConvGeometry {
    /// Valid output index range along one axis for kernel offset `kk`.
    #[inline]
    fn out_range(&self, kk: usize, extent: usize, out_extent: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.pad > kk { (self.pad - kk).div_ceil(s) } else { 0 };
        let hi_num = extent + self.pad;
        // ix = o*s + kk - pad < extent  <=>  o*s < extent + pad - kk
        let hi = if hi_num > kk { (hi_num - kk - 1) / s + 1 } else { 0 };
        (lo, hi.min(out_extent))
    }

    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize, usize, usize, usize)) {
        // f(ky, kx, oy, ox_lo, ox_hi, iy) called for each valid output row
        for ky in 0..self.k {
            let (oy_lo, oy_hi) = self.out_range(ky, self.h, self.h_out);
            for kx in 0..self.k {
                let (ox_lo, ox_hi) = self.out_range(kx, self.w, self.w_out);
                if ox_lo >= ox_hi {
                    continue;
                }
                for oy in oy_lo..oy_hi {
                    let iy = oy * self.stride + ky - self.pad;
                    f(ky, kx, oy, ox_lo, ox_hi, iy);
                }
            }
        }
    }
}

/// Unfolds `x` into a `(c_in·k·k) × (h_out·w_out)` patch matrix.
fn im2col<T: Real>(x: &[T], g: &ConvGeometry) -> Vec<T> {
    let (k, s, pad) = (g.k, g.stride, g.pad);
    let p = g.h_out * g.w_out;
    let mut col = vec![T::zero(); g.c_in * k * k * p];
    for ci in 0..g.c_in {
        let xc = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        g.for_each_tap(|ky, kx, oy, lo, hi, iy| {
            let r = (ci * k + ky) * k + kx;
            let dst = &mut col[r * p + oy * g.w_out..r * p + (oy + 1) * g.w_out];
            let xrow = &xc[iy * g.w..(iy + 1) * g.w];
            for ox in lo..hi {
                dst[ox] = xrow[ox * s + kx - pad];
            }
        });
    }
    col
}

/// Adjoint of [`im2col`]: scatters patch gradients back onto the input.
fn col2im_acc<T: Real>(col: &[T], g: &ConvGeometry, gx: &mut [T]) {
    let (k, s, pad) = (g.k, g.stride, g.pad);
    let p = g.h_out * g.w_out;
    for ci in 0..g.c_in {
        let gxc = &mut gx[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        g.for_each_tap(|ky, kx, oy, lo, hi, iy| {
            let r = (ci * k + ky) * k + kx;
            let src = &col[r * p + oy * g.w_out..r * p + (oy + 1) * g.w_out];
            let gxrow = &mut gxc[iy * g.w..(iy + 1) * g.w];
            for ox in lo..hi {
                gxrow[ox * s + kx - pad] += src[ox];
            }
        });
    }
}

pub(crate) fn conv_forward_acc<T: Real>(x: &[T], kern: &[T], g: &ConvGeometry, y: &mut [T]) {
    let ck = g.c_in * g.k * g.k;
    matmul_acc(kern, &im2col(x, g), y, g.c_out, ck, g.h_out * g.w_out);
}

pub(crate) fn conv_backward_input_acc<T: Real>(gy: &[T], kern: &[T], g: &ConvGeometry, gx: &mut [T]) {
    let ck = g.c_in * g.k * g.k;
    let p = g.h_out * g.w_out;
    let mut col = vec![T::zero(); ck * p];
    matmul_at_b_acc(kern, gy, &mut col, g.c_out, ck, p);
    col2im_acc(&col, g, gx);
}

pub(crate) fn conv_backward_kernel_acc<T: Real>(x: &[T], gy: &[T], g: &ConvGeometry, gk: &mut [T]) {
    let ck = g.c_in * g.k * g.k;
    matmul_a_bt_acc(gy, &im2col(x, g), gk, g.c_out, ck, g.h_out * g.w_out);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn extent_formulas_sweep() {
        for k in [1usize, 3, 5] {
            for s in [1usize, 2] {
                for p in [0usize, 1, 2] {
                    for n in [5usize, 8, 9, 16] {
                        let out = conv_output_extent(n, k, s, p).unwrap();
                        assert_eq!(out, (n + 2 * p - k) / s + 1);
                        for op in 0..s {
                            if let Ok(d) = deconv_output_extent(n, k, s, p, op) {
                                assert_eq!(d + 2 * p, (n - 1) * s + k + op);
                            }
                        }
                    }
                }
            }
        }
        assert!(conv_output_extent(3, 5, 1, 0).is_err());
        assert!(deconv_output_extent(4, 3, 2, 1, 2).is_err());
        assert!(conv_output_extent(4, 3, 0, 1).is_err());
    }

    #[test]
    fn brute_force_conv_matches() {
        // naive reference with explicit padding
        let g = ConvGeometry { c_in: 2, h: 5, w: 4, c_out: 3, k: 3, stride: 2, pad: 1, h_out: 3, w_out: 2 };
        let x: Vec<f64> = (0..40).map(|i| (i as f64 * 0.37).sin()).collect();
        let kern: Vec<f64> = (0..54).map(|i| (i as f64 * 0.91).cos()).collect();
        let mut y = vec![0.0; 18];
        conv_forward_acc(&x, &kern, &g, &mut y);
        for co in 0..3 {
            for oy in 0..3 {
                for ox in 0..2 {
                    let mut acc = 0.0;
                    for ci in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy < 0 || ix < 0 || iy >= 5 || ix >= 4 {
                                    continue;
                                }
                                acc += kern[((co * 2 + ci) * 3 + ky) * 3 + kx]
                                    * x[(ci * 5 + iy as usize) * 4 + ix as usize];
                            }
                        }
                    }
                    assert!((y[(co * 3 + oy) * 2 + ox] - acc).abs() < 1e-12);
                }
            }
        }
    }
}
