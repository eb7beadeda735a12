//! Direct 2-D convolution kernels.
//!
//! A convolution maps the "large" side `[N, large_ch, H, W]` to the "small"
//! side `[N, small_ch, OH, OW]` with weights laid out `[small_ch, large_ch, k, k]`.
//! `gather` is the convolution itself, `scatter` is its exact adjoint (the
//! transposed convolution), and `weight_grad` is the derivative of either with
//! respect to the shared weights.

use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug)]
pub(crate) struct Geometry {
    pub large_ch: usize,
    pub small_ch: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub h: usize,
    pub w: usize,
    pub oh: usize,
    pub ow: usize,
}

impl Geometry {
    fn large_len(&self) -> usize {
        self.large_ch * self.h * self.w
    }

    #[cfg(test)]
    fn small_len(&self) -> usize {
        self.small_ch * self.oh * self.ow
    }

    fn taps(&self) -> usize {
        self.large_ch * self.kernel * self.kernel
    }

    /// Output positions `o` whose tap `k` lands inside `[0, limit)`.
    fn valid_range(&self, k: usize, limit: usize, out: usize) -> std::ops::Range<usize> {
        // o·s + k − p ∈ [0, limit)
        let lo = self.padding.saturating_sub(k).div_ceil(self.stride);
        let hi = (limit + self.padding).saturating_sub(k).div_ceil(self.stride).min(out);
        lo..hi.max(lo)
    }
}

/// Patch matrix `[large_ch·k·k, batch·oh·ow]`; padding reads as zero.
fn im2col<T: Scalar>(g: &Geometry, batch: usize, large: &[T]) -> Vec<T> {
    let (k, plane) = (g.kernel, g.oh * g.ow);
    let cols = batch * plane;
    let mut out = vec![T::zero(); g.taps() * cols];
    for ci in 0..g.large_ch {
        for ky in 0..k {
            let rows = g.valid_range(ky, g.h, g.oh);
            for kx in 0..k {
                let xs = g.valid_range(kx, g.w, g.ow);
                let r = (ci * k + ky) * k + kx;
                let dst = &mut out[r * cols..(r + 1) * cols];
                for n in 0..batch {
                    let xc = &large[(n * g.large_ch + ci) * g.h * g.w..][..g.h * g.w];
                    for oy in rows.clone() {
                        let iy = oy * g.stride + ky - g.padding;
                        let d = &mut dst[n * plane + oy * g.ow..][..g.ow];
                        for ox in xs.clone() {
                            d[ox] = xc[iy * g.w + ox * g.stride + kx - g.padding];
                        }
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col`]: sums patch entries back into image positions.
fn col2im<T: Scalar>(g: &Geometry, batch: usize, col: &[T]) -> Vec<T> {
    let (k, plane) = (g.kernel, g.oh * g.ow);
    let cols = batch * plane;
    let mut out = vec![T::zero(); batch * g.large_len()];
    for ci in 0..g.large_ch {
        for ky in 0..k {
            let rows = g.valid_range(ky, g.h, g.oh);
            for kx in 0..k {
                let xs = g.valid_range(kx, g.w, g.ow);
                let r = (ci * k + ky) * k + kx;
                let src = &col[r * cols..(r + 1) * cols];
                for n in 0..batch {
                    let xc = &mut out[(n * g.large_ch + ci) * g.h * g.w..][..g.h * g.w];
                    for oy in rows.clone() {
                        let iy = oy * g.stride + ky - g.padding;
                        let s = &src[n * plane + oy * g.ow..][..g.ow];
                        for ox in xs.clone() {
                            xc[iy * g.w + ox * g.stride + kx - g.padding] += s[ox];
                        }
                    }
                }
            }
        }
    }
    out
}

/// `[N, C, P]` to `[C, N·P]` and back.
fn to_channel_major<T: Scalar>(x: &[T], batch: usize, ch: usize, plane: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for n in 0..batch {
        for c in 0..ch {
            out[(c * batch + n) * plane..][..plane].copy_from_slice(&x[(n * ch + c) * plane..][..plane]);
        }
    }
    out
}

fn to_batch_major<T: Scalar>(x: &[T], batch: usize, ch: usize, plane: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    for n in 0..batch {
        for c in 0..ch {
            out[(n * ch + c) * plane..][..plane].copy_from_slice(&x[(c * batch + n) * plane..][..plane]);
        }
    }
    out
}

fn axpy<T: Scalar>(y: &mut [T], a: T, x: &[T]) {
    for (yv, &xv) in y.iter_mut().zip(x) {
        *yv += a * xv;
    }
}

/// `small[n] = conv(large[n], w)`, without bias.
pub(crate) fn gather<T: Scalar>(g: &Geometry, batch: usize, large: &[T], weight: &[T]) -> Vec<T> {
    let (taps, cols) = (g.taps(), batch * g.oh * g.ow);
    let col = im2col(g, batch, large);
    let mut y = vec![T::zero(); g.small_ch * cols];
    for co in 0..g.small_ch {
        let yr = &mut y[co * cols..(co + 1) * cols];
        for r in 0..taps {
            let wv = weight[co * taps + r];
            if wv != T::zero() {
                axpy(yr, wv, &col[r * cols..(r + 1) * cols]);
            }
        }
    }
    to_batch_major(&y, batch, g.small_ch, g.oh * g.ow)
}

/// Adjoint of [`gather`]: `large[n] = convᵀ(small[n], w)`, without bias.
pub(crate) fn scatter<T: Scalar>(g: &Geometry, batch: usize, small: &[T], weight: &[T]) -> Vec<T> {
    let (taps, cols) = (g.taps(), batch * g.oh * g.ow);
    let y = to_channel_major(small, batch, g.small_ch, g.oh * g.ow);
    let mut col = vec![T::zero(); taps * cols];
    for co in 0..g.small_ch {
        let yr = &y[co * cols..(co + 1) * cols];
        for r in 0..taps {
            let wv = weight[co * taps + r];
            if wv != T::zero() {
                axpy(&mut col[r * cols..(r + 1) * cols], wv, yr);
            }
        }
    }
    col2im(g, batch, &col)
}

/// `∂⟨small_grad, gather(large, w)⟩ / ∂w`.
pub(crate) fn weight_grad<T: Scalar>(g: &Geometry, batch: usize, large: &[T], small_grad: &[T]) -> Vec<T> {
    let (taps, cols) = (g.taps(), batch * g.oh * g.ow);
    let col = im2col(g, batch, large);
    let y = to_channel_major(small_grad, batch, g.small_ch, g.oh * g.ow);
    let mut gw = vec![T::zero(); g.small_ch * taps];
    for co in 0..g.small_ch {
        let yr = &y[co * cols..(co + 1) * cols];
        for r in 0..taps {
            gw[co * taps + r] = crate::tensor::dot(yr, &col[r * cols..(r + 1) * cols]);
        }
    }
    gw
}
