use rayon::prelude::*;

use super::{is_deterministic, Real, Tensor};
use crate::error::{shape_err, Result};

/// Gradients of [`linear`] with respect to its three operands.
#[derive(Clone, Debug)]
pub struct LinearGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// `input · weightᵀ + bias` for `input: [B, I]`, `weight: [O, I]`, `bias: [O]`.
pub fn linear<T: Real>(input: &Tensor<T>, weight: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let (batch, fan_in, fan_out) = linear_dims(input, weight, bias)?;
    let mut out = vec![T::zero(); batch * fan_out];
    let x = input.data();
    let w = weight.data();
    let b = bias.data();
    out.par_chunks_mut(fan_out).enumerate().for_each(|(row, o)| {
        let xr = &x[row * fan_in..(row + 1) * fan_in];
        for (j, v) in o.iter_mut().enumerate() {
            let wr = &w[j * fan_in..(j + 1) * fan_in];
            let mut acc = b[j];
            for (a, c) in xr.iter().zip(wr) {
                acc += *a * *c;
            }
            *v = acc;
        }
    });
    Tensor::new(vec![batch, fan_out], out)
}

pub fn linear_backward<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<LinearGrads<T>> {
    input.expect_rank(2, "linear input")?;
    weight.expect_rank(2, "linear weight")?;
    let (batch, fan_in) = (input.shape()[0], input.shape()[1]);
    let fan_out = weight.shape()[0];
    if weight.shape()[1] != fan_in || grad_out.shape() != [batch, fan_out] {
        return Err(shape_err(format!(
            "linear backward: input {:?}, weight {:?}, grad {:?}",
            input.shape(),
            weight.shape(),
            grad_out.shape()
        )));
    }
    let x = input.data();
    let w = weight.data();
    let g = grad_out.data();

    let mut gin = vec![T::zero(); batch * fan_in];
    gin.par_chunks_mut(fan_in).enumerate().for_each(|(row, gi)| {
        for j in 0..fan_out {
            let gv = g[row * fan_out + j];
            if gv == T::zero() {
                continue;
            }
            for (dst, wv) in gi.iter_mut().zip(&w[j * fan_in..(j + 1) * fan_in]) {
                *dst += gv * *wv;
            }
        }
    });

    // Each weight row sums over the batch in row order: deterministic regardless of threads.
    let mut gw = vec![T::zero(); fan_out * fan_in];
    gw.par_chunks_mut(fan_in).enumerate().for_each(|(j, gr)| {
        for row in 0..batch {
            let gv = g[row * fan_out + j];
            for (dst, xv) in gr.iter_mut().zip(&x[row * fan_in..(row + 1) * fan_in]) {
                *dst += gv * *xv;
            }
        }
    });

    let gb = (0..fan_out)
        .map(|j| (0..batch).map(|row| g[row * fan_out + j]).sum())
        .collect();

    Ok(LinearGrads {
        input: Tensor::new(vec![batch, fan_in], gin)?,
        weight: Tensor::new(vec![fan_out, fan_in], gw)?,
        bias: Tensor::new(vec![fan_out], gb)?,
    })
}

fn linear_dims<T: Real>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<(usize, usize, usize)> {
    input.expect_rank(2, "linear input")?;
    weight.expect_rank(2, "linear weight")?;
    bias.expect_rank(1, "linear bias")?;
    let (batch, fan_in) = (input.shape()[0], input.shape()[1]);
    let fan_out = weight.shape()[0];
    if weight.shape()[1] != fan_in || bias.shape()[0] != fan_out {
        return Err(shape_err(format!(
            "linear: input {:?}, weight {:?}, bias {:?}",
            input.shape(),
            weight.shape(),
            bias.shape()
        )));
    }
    Ok((batch, fan_in, fan_out))
}

/// Elementwise `sin(omega · x)`.
pub fn sine_act<T: Real>(x: &Tensor<T>, omega: T) -> Tensor<T> {
    x.map(|v| (omega * v).sin())
}

/// Upstream gradient times `omega · cos(omega · x)`.
pub fn sine_act_backward<T: Real>(x: &Tensor<T>, omega: T, grad_out: &Tensor<T>) -> Result<Tensor<T>> {
    if x.shape() != grad_out.shape() {
        return Err(shape_err(format!(
            "sine backward: {:?} vs {:?}",
            x.shape(),
            grad_out.shape()
        )));
    }
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| g * omega * (omega * v).cos())
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub kernel: Tensor<T>,
    pub bias: Tensor<T>,
}

struct ConvDims {
    batch: usize,
    c_in: usize,
    c_out: usize,
    h: usize,
    w: usize,
}

fn conv_dims<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>) -> Result<ConvDims> {
    input.expect_rank(4, "conv input")?;
    kernel.expect_rank(4, "conv kernel")?;
    let s = input.shape();
    let k = kernel.shape();
    if k[1] != s[1] || k[2] != 3 || k[3] != 3 || s[2] == 0 || s[3] == 0 {
        return Err(shape_err(format!(
            "conv3x3: input {:?}, kernel {:?}",
            s, k
        )));
    }
    Ok(ConvDims {
        batch: s[0],
        c_in: s[1],
        c_out: k[0],
        h: s[2],
        w: s[3],
    })
}

/// Valid index ranges `[lo, hi)` of the output axis for a tap offset `d ∈ {-1, 0, 1}`.
#[inline]
fn tap_range(d: isize, n: usize) -> (usize, usize) {
    let lo = if d < 0 { 1 } else { 0 };
    let hi = if d > 0 { n - 1 } else { n };
    (lo, hi.max(lo))
}

/// Patch matrix `[C_in·9, B·H·W]`: row `ci·9 + ky·3 + kx` holds the input shifted by
/// `(ky − 1, kx − 1)`, zero outside the frame.
fn im2col<T: Real>(x: &[T], d: &ConvDims) -> Vec<T> {
    let plane = d.h * d.w;
    let n = d.batch * plane;
    let mut cols = vec![T::zero(); d.c_in * 9 * n];
    cols.par_chunks_mut(n).enumerate().for_each(|(row, dst)| {
        let (ci, tap) = (row / 9, row % 9);
        let (dy, dx) = (tap as isize / 3 - 1, tap as isize % 3 - 1);
        let (y0, y1) = tap_range(dy, d.h);
        let (x0, x1) = tap_range(dx, d.w);
        for item in 0..d.batch {
            let src = &x[(item * d.c_in + ci) * plane..][..plane];
            let out = &mut dst[item * plane..][..plane];
            for y in y0..y1 {
                let s0 = ((y as isize + dy) as usize * d.w) as isize + x0 as isize + dx;
                out[y * d.w + x0..y * d.w + x1].copy_from_slice(&src[s0 as usize..][..x1 - x0]);
            }
        }
    });
    cols
}

/// Adjoint of [`im2col`]: scatters patch-matrix rows back onto `[B, C_in, H, W]`.
fn col2im<T: Real>(cols: &[T], d: &ConvDims) -> Vec<T> {
    let plane = d.h * d.w;
    let n = d.batch * plane;
    let mut out = vec![T::zero(); d.batch * d.c_in * plane];
    out.par_chunks_mut(plane).enumerate().for_each(|(idx, dst)| {
        let (item, ci) = (idx / d.c_in, idx % d.c_in);
        for tap in 0..9 {
            let (dy, dx) = (tap as isize / 3 - 1, tap as isize % 3 - 1);
            let (y0, y1) = tap_range(dy, d.h);
            let (x0, x1) = tap_range(dx, d.w);
            let src = &cols[(ci * 9 + tap) * n + item * plane..][..plane];
            for y in y0..y1 {
                let s0 = ((y as isize + dy) as usize * d.w) as isize + x0 as isize + dx;
                let row = &mut dst[s0 as usize..][..x1 - x0];
                for (o, v) in row.iter_mut().zip(&src[y * d.w + x0..y * d.w + x1]) {
                    *o += *v;
                }
            }
        }
    });
    out
}

/// `[B, C, P]` → `[C, B·P]`.
fn to_channel_major<T: Real>(x: &[T], batch: usize, c: usize, plane: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    out.par_chunks_mut(batch * plane).enumerate().for_each(|(ch, dst)| {
        for item in 0..batch {
            dst[item * plane..][..plane].copy_from_slice(&x[(item * c + ch) * plane..][..plane]);
        }
    });
    out
}

/// `[C, B·P]` → `[B, C, P]`.
fn from_channel_major<T: Real>(x: &[T], batch: usize, c: usize, plane: usize) -> Vec<T> {
    let mut out = vec![T::zero(); x.len()];
    out.par_chunks_mut(c * plane).enumerate().for_each(|(item, dst)| {
        for ch in 0..c {
            dst[ch * plane..][..plane].copy_from_slice(&x[(ch * batch + item) * plane..][..plane]);
        }
    });
    out
}

/// 3×3 cross-correlation with stride 1 and one pixel of zero padding.
pub fn conv3x3<T: Real>(input: &Tensor<T>, kernel: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let d = conv_dims(input, kernel)?;
    if bias.shape() != [d.c_out] {
        return Err(shape_err(format!(
            "conv3x3 bias {:?}, expected [{}]",
            bias.shape(),
            d.c_out
        )));
    }
    let plane = d.h * d.w;
    let n = d.batch * plane;
    let taps = d.c_in * 9;
    let cols = im2col(input.data(), &d);
    let k = kernel.data();
    let b = bias.data();
    let mut out = vec![T::zero(); d.c_out * n];
    out.par_chunks_mut(n).enumerate().for_each(|(co, o)| {
        o.fill(b[co]);
        for (t, &wv) in k[co * taps..(co + 1) * taps].iter().enumerate() {
            for (ov, cv) in o.iter_mut().zip(&cols[t * n..(t + 1) * n]) {
                *ov += wv * *cv;
            }
        }
    });
    Tensor::new(
        vec![d.batch, d.c_out, d.h, d.w],
        from_channel_major(&out, d.batch, d.c_out, plane),
    )
}

/// Sum of `a[i] · b[i]` over eight interleaved lanes combined in a fixed order.
fn dot_lanes<T: Real>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 8];
    let mut ca = a.chunks_exact(8);
    let mut cb = b.chunks_exact(8);
    for (x, y) in (&mut ca).zip(&mut cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = T::zero();
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// [`dot_lanes`]; in fast mode long ranges are split across threads and the
/// partial sums combined in whatever order they finish.
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    const SPLIT: usize = 1 << 14;
    if is_deterministic() || a.len() <= SPLIT {
        dot_lanes(a, b)
    } else {
        a.par_chunks(SPLIT)
            .zip(b.par_chunks(SPLIT))
            .map(|(x, y)| dot_lanes(x, y))
            .reduce(T::zero, |p, q| p + q)
    }
}

pub fn conv3x3_backward<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let d = conv_dims(input, kernel)?;
    if grad_out.shape() != [d.batch, d.c_out, d.h, d.w] {
        return Err(shape_err(format!(
            "conv3x3 backward grad {:?}",
            grad_out.shape()
        )));
    }
    let plane = d.h * d.w;
    let n = d.batch * plane;
    let taps = d.c_in * 9;
    let cols = im2col(input.data(), &d);
    let g = to_channel_major(grad_out.data(), d.batch, d.c_out, plane);
    let k = kernel.data();

    let mut gk = vec![T::zero(); d.c_out * taps];
    gk.par_chunks_mut(taps).enumerate().for_each(|(co, row)| {
        let gr = &g[co * n..(co + 1) * n];
        for (t, v) in row.iter_mut().enumerate() {
            *v = dot(gr, &cols[t * n..(t + 1) * n]);
        }
    });
    let ones = vec![T::one(); n];
    let gb: Vec<T> = (0..d.c_out).map(|co| dot(&g[co * n..(co + 1) * n], &ones)).collect();

    let mut gcols = vec![T::zero(); taps * n];
    gcols.par_chunks_mut(n).enumerate().for_each(|(t, row)| {
        for co in 0..d.c_out {
            let wv = k[co * taps + t];
            for (r, gv) in row.iter_mut().zip(&g[co * n..(co + 1) * n]) {
                *r += wv * *gv;
            }
        }
    });

    Ok(ConvGrads {
        input: Tensor::new(vec![d.batch, d.c_in, d.h, d.w], col2im(&gcols, &d))?,
        kernel: Tensor::new(kernel.shape().to_vec(), gk)?,
        bias: Tensor::new(vec![d.c_out], gb)?,
    })
}

/// Rearranges `[B, C·r², h, w]` into `[B, C, r·h, r·w]`.
///
/// Output pixel `(c, y·r + i, x·r + j)` takes input channel `c·r² + i·r + j` at `(y, x)`.
pub fn pixel_shuffle<T: Real>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    input.expect_rank(4, "pixel_shuffle input")?;
    let s = input.shape();
    if r == 0 || s[1] % (r * r) != 0 {
        return Err(shape_err(format!(
            "pixel_shuffle: {} channels not divisible by r²={}",
            s[1],
            r * r
        )));
    }
    let (b, c_in, h, w) = (s[0], s[1], s[2], s[3]);
    let c = c_in / (r * r);
    let (oh, ow) = (h * r, w * r);
    let x = input.data();
    let mut out = vec![T::zero(); x.len()];
    out.par_chunks_mut(c * oh * ow)
        .enumerate()
        .for_each(|(item, o)| {
            let xi = &x[item * c_in * h * w..(item + 1) * c_in * h * w];
            for ch in 0..c {
                for i in 0..r {
                    for j in 0..r {
                        let src = &xi[(ch * r * r + i * r + j) * h * w..][..h * w];
                        for y in 0..h {
                            let orow = &mut o[ch * oh * ow + (y * r + i) * ow..][..ow];
                            for xx in 0..w {
                                orow[xx * r + j] = src[y * w + xx];
                            }
                        }
                    }
                }
            }
        });
    Tensor::new(vec![b, c, oh, ow], out)
}

/// Inverse of [`pixel_shuffle`]; also its backward pass.
pub fn pixel_unshuffle<T: Real>(input: &Tensor<T>, r: usize) -> Result<Tensor<T>> {
    input.expect_rank(4, "pixel_unshuffle input")?;
    let s = input.shape();
    if r == 0 || s[2] % r != 0 || s[3] % r != 0 {
        return Err(shape_err(format!(
            "pixel_unshuffle: spatial {:?} not divisible by {r}",
            &s[2..]
        )));
    }
    let (b, c, oh, ow) = (s[0], s[1], s[2], s[3]);
    let (h, w) = (oh / r, ow / r);
    let c_out = c * r * r;
    let x = input.data();
    let mut out = vec![T::zero(); x.len()];
    out.par_chunks_mut(c_out * h * w)
        .enumerate()
        .for_each(|(item, o)| {
            let xi = &x[item * c * oh * ow..(item + 1) * c * oh * ow];
            for ch in 0..c {
                for i in 0..r {
                    for j in 0..r {
                        let dst = &mut o[(ch * r * r + i * r + j) * h * w..][..h * w];
                        for y in 0..h {
                            let irow = &xi[ch * oh * ow + (y * r + i) * ow..][..ow];
                            for xx in 0..w {
                                dst[y * w + xx] = irow[xx * r + j];
                            }
                        }
                    }
                }
            }
        });
    Tensor::new(vec![b, c_out, h, w], out)
}
