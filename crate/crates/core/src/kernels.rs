//! Forward and adjoint kernels shared by the differentiation tape and the
//! tape-free public operations. All kernels work on raw row-major slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeom {
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

impl ConvGeom {
    pub fn new(input: &[usize], kernel: &[usize], stride: usize, pad: usize) -> Result<Self> {
        if input.len() != 3 || kernel.len() != 4 {
            return Err(shape_err!(
                "conv2d wants [C,H,W] and [Co,Ci,k,k], got {:?} and {:?}",
                input,
                kernel
            ));
        }
        let (c_in, h, w) = (input[0], input[1], input[2]);
        let (c_out, ci, k, k2) = (kernel[0], kernel[1], kernel[2], kernel[3]);
        if ci != c_in || k != k2 {
            return Err(shape_err!(
                "conv2d kernel {:?} does not fit input {:?}",
                kernel,
                input
            ));
        }
        if stride == 0 {
            return Err(invalid!("conv2d stride must be positive"));
        }
        if k > h + 2 * pad || k > w + 2 * pad {
            return Err(invalid!(
                "kernel {k} larger than padded input {h}x{w} (pad {pad})"
            ));
        }
        let h_out = (h + 2 * pad - k) / stride + 1;
        let w_out = (w + 2 * pad - k) / stride + 1;
        Ok(ConvGeom {
            c_in,
            h,
            w,
            c_out,
            k,
            stride,
            pad,
            h_out,
            w_out,
        })
    }

    /// Output columns `x` whose tap `kx` lands inside the input row.
    #[inline]
    fn valid_range(&self, tap: usize, out_len: usize, in_len: usize) -> (usize, usize) {
        // in = out*stride + tap - pad must satisfy 0 <= in < in_len
        let s = self.stride;
        let lo = if tap >= self.pad {
            0
        } else {
            (self.pad - tap).div_ceil(s)
        };
        let limit = in_len + self.pad; // out*s + tap < limit
        let hi = if tap >= limit {
            0
        } else {
            ((limit - tap - 1) / s + 1).min(out_len)
        };
        (lo, hi.max(lo))
    }
}

pub fn conv2d_forward(
    g: &ConvGeom,
    input: &[f64],
    kernel: &[f64],
    bias: Option<&[f64]>,
) -> Vec<f64> {
    let plane_out = g.h_out * g.w_out;
    let mut out = vec![0.0; g.c_out * plane_out];
    for o in 0..g.c_out {
        let out_o = &mut out[o * plane_out..(o + 1) * plane_out];
        if let Some(b) = bias {
            out_o.iter_mut().for_each(|v| *v = b[o]);
        }
        for c in 0..g.c_in {
            let in_c = &input[c * g.h * g.w..(c + 1) * g.h * g.w];
            for ky in 0..g.k {
                let (y_lo, y_hi) = g.valid_range(ky, g.h_out, g.h);
                for kx in 0..g.k {
                    let wv = kernel[((o * g.c_in + c) * g.k + ky) * g.k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x_lo, x_hi) = g.valid_range(kx, g.w_out, g.w);
                    for y in y_lo..y_hi {
                        let iy = y * g.stride + ky - g.pad;
                        let row_in = &in_c[iy * g.w..(iy + 1) * g.w];
                        let row_out = &mut out_o[y * g.w_out..(y + 1) * g.w_out];
                        if g.stride == 1 {
                            let off = kx as isize - g.pad as isize;
                            for x in x_lo..x_hi {
                                row_out[x] += wv * row_in[(x as isize + off) as usize];
                            }
                        } else {
                            for x in x_lo..x_hi {
                                row_out[x] += wv * row_in[x * g.stride + kx - g.pad];
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// Returns (d_input, d_kernel, d_bias).
pub fn conv2d_backward(
    g: &ConvGeom,
    input: &[f64],
    kernel: &[f64],
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let plane_out = g.h_out * g.w_out;
    let mut din = vec![0.0; input.len()];
    let mut dk = vec![0.0; kernel.len()];
    let mut db = vec![0.0; g.c_out];
    for o in 0..g.c_out {
        let dout_o = &dout[o * plane_out..(o + 1) * plane_out];
        db[o] = dout_o.iter().sum();
        for c in 0..g.c_in {
            let base = c * g.h * g.w;
            for ky in 0..g.k {
                let (y_lo, y_hi) = g.valid_range(ky, g.h_out, g.h);
                for kx in 0..g.k {
                    let widx = ((o * g.c_in + c) * g.k + ky) * g.k + kx;
                    let wv = kernel[widx];
                    let (x_lo, x_hi) = g.valid_range(kx, g.w_out, g.w);
                    let mut acc = 0.0;
                    for y in y_lo..y_hi {
                        let iy = y * g.stride + ky - g.pad;
                        let row = base + iy * g.w;
                        let drow = &dout_o[y * g.w_out..(y + 1) * g.w_out];
                        for x in x_lo..x_hi {
                            let ix = x * g.stride + kx - g.pad;
                            acc += drow[x] * input[row + ix];
                            din[row + ix] += drow[x] * wv;
                        }
                    }
                    dk[widx] += acc;
                }
            }
        }
    }
    (din, dk, db)
}

/// `x` is `[rows, n_in]`, `w` is `[n_out, n_in]`.
pub fn linear_forward(
    x: &[f64],
    rows: usize,
    n_in: usize,
    w: &[f64],
    n_out: usize,
    b: Option<&[f64]>,
) -> Vec<f64> {
    let mut out = vec![0.0; rows * n_out];
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            let wo = &w[o * n_in..(o + 1) * n_in];
            let mut acc = b.map_or(0.0, |b| b[o]);
            for (a, c) in xr.iter().zip(wo) {
                acc += a * c;
            }
            out[r * n_out + o] = acc;
        }
    }
    out
}

pub fn linear_backward(
    x: &[f64],
    rows: usize,
    n_in: usize,
    w: &[f64],
    n_out: usize,
    dout: &[f64],
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut dx = vec![0.0; rows * n_in];
    let mut dw = vec![0.0; n_out * n_in];
    let mut db = vec![0.0; n_out];
    for r in 0..rows {
        let xr = &x[r * n_in..(r + 1) * n_in];
        let dxr = &mut dx[r * n_in..(r + 1) * n_in];
        for o in 0..n_out {
            let d = dout[r * n_out + o];
            if d == 0.0 {
                continue;
            }
            db[o] += d;
            let wo = &w[o * n_in..(o + 1) * n_in];
            let dwo = &mut dw[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                dxr[i] += d * wo[i];
                dwo[i] += d * xr[i];
            }
        }
    }
    (dx, dw, db)
}

/// Row-wise softmax over contiguous rows of length `d`.
pub fn softmax_rows(x: &[f64], d: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (xr, yr) in x.chunks(d).zip(out.chunks_mut(d)) {
        let m = xr.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (y, &v) in yr.iter_mut().zip(xr) {
            *y = libm::exp(v - m);
            s += *y;
        }
        yr.iter_mut().for_each(|y| *y /= s);
    }
    out
}

pub fn softmax_rows_backward(y: &[f64], dy: &[f64], d: usize) -> Vec<f64> {
    let mut dx = vec![0.0; y.len()];
    for ((yr, dyr), dxr) in y.chunks(d).zip(dy.chunks(d)).zip(dx.chunks_mut(d)) {
        let dot: f64 = yr.iter().zip(dyr).map(|(a, b)| a * b).sum();
        for i in 0..d {
            dxr[i] = yr[i] * (dyr[i] - dot);
        }
    }
    dx
}

/// Layer normalization over rows of length `d`. Returns (output, normalized, inverse std per row).
pub fn layer_norm_forward(
    x: &[f64],
    d: usize,
    gain: &[f64],
    shift: &[f64],
    eps: f64,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = x.len() / d;
    let mut out = vec![0.0; x.len()];
    let mut xhat = vec![0.0; x.len()];
    let mut inv = vec![0.0; rows];
    for r in 0..rows {
        let xr = &x[r * d..(r + 1) * d];
        let mean = xr.iter().sum::<f64>() / d as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let is = 1.0 / libm::sqrt(var + eps);
        inv[r] = is;
        for i in 0..d {
            let h = (xr[i] - mean) * is;
            xhat[r * d + i] = h;
            out[r * d + i] = gain[i] * h + shift[i];
        }
    }
    (out, xhat, inv)
}

pub fn layer_norm_backward(
    xhat: &[f64],
    inv: &[f64],
    gain: &[f64],
    dy: &[f64],
    d: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let rows = xhat.len() / d;
    let mut dx = vec![0.0; xhat.len()];
    let mut dg = vec![0.0; d];
    let mut db = vec![0.0; d];
    for r in 0..rows {
        let h = &xhat[r * d..(r + 1) * d];
        let g = &dy[r * d..(r + 1) * d];
        let mut mean_dh = 0.0;
        let mut mean_dh_h = 0.0;
        for i in 0..d {
            dg[i] += g[i] * h[i];
            db[i] += g[i];
            let dh = g[i] * gain[i];
            mean_dh += dh;
            mean_dh_h += dh * h[i];
        }
        mean_dh /= d as f64;
        mean_dh_h /= d as f64;
        for i in 0..d {
            let dh = g[i] * gain[i];
            dx[r * d + i] = inv[r] * (dh - mean_dh - h[i] * mean_dh_h);
        }
    }
    (dx, dg, db)
}

/// Scaled dot-product attention on contiguous buffers.
/// Returns (output `[nq, dv]`, weights `[nq, nk]`).
pub fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    nq: usize,
    nk: usize,
    d: usize,
    dv: usize,
) -> (Vec<f64>, Vec<f64>) {
    let scale = 1.0 / libm::sqrt(d as f64);
    let mut logits = vec![0.0; nq * nk];
    for i in 0..nq {
        let qi = &q[i * d..(i + 1) * d];
        for j in 0..nk {
            let kj = &k[j * d..(j + 1) * d];
            logits[i * nk + j] = qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>() * scale;
        }
    }
    let p = softmax_rows(&logits, nk);
    let mut out = vec![0.0; nq * dv];
    for i in 0..nq {
        let oi = &mut out[i * dv..(i + 1) * dv];
        for j in 0..nk {
            let w = p[i * nk + j];
            let vj = &v[j * dv..(j + 1) * dv];
            for (o, &x) in oi.iter_mut().zip(vj) {
                *o += w * x;
            }
        }
    }
    (out, p)
}

/// Returns (dq, dk, dv).
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    p: &[f64],
    dout: &[f64],
    nq: usize,
    nk: usize,
    d: usize,
    dv: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let scale = 1.0 / libm::sqrt(d as f64);
    let mut dvv = vec![0.0; nk * dv];
    let mut dp = vec![0.0; nq * nk];
    for i in 0..nq {
        let doi = &dout[i * dv..(i + 1) * dv];
        for j in 0..nk {
            let w = p[i * nk + j];
            let vj = &v[j * dv..(j + 1) * dv];
            let dvj = &mut dvv[j * dv..(j + 1) * dv];
            let mut acc = 0.0;
            for c in 0..dv {
                dvj[c] += w * doi[c];
                acc += doi[c] * vj[c];
            }
            dp[i * nk + j] = acc;
        }
    }
    let ds = softmax_rows_backward(p, &dp, nk);
    let mut dq = vec![0.0; nq * d];
    let mut dk = vec![0.0; nk * d];
    for i in 0..nq {
        for j in 0..nk {
            let s = ds[i * nk + j] * scale;
            if s == 0.0 {
                continue;
            }
            for c in 0..d {
                dq[i * d + c] += s * k[j * d + c];
                dk[j * d + c] += s * q[i * d + c];
            }
        }
    }
    (dq, dk, dvv)
}

/// 2×2 max pooling with ceil-mode borders. Returns (output, argmax flat input index per output).
pub fn max_pool2_forward(x: &[f64], c: usize, h: usize, w: usize) -> (Vec<f64>, Vec<usize>) {
    let (ho, wo) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![0.0; c * ho * wo];
    let mut arg = vec![0usize; c * ho * wo];
    for ch in 0..c {
        for y in 0..ho {
            for xo in 0..wo {
                let mut best = f64::NEG_INFINITY;
                let mut bi = 0;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (iy, ix) = (2 * y + dy, 2 * xo + dx);
                        if iy < h && ix < w {
                            let idx = (ch * h + iy) * w + ix;
                            if x[idx] > best {
                                best = x[idx];
                                bi = idx;
                            }
                        }
                    }
                }
                let o = (ch * ho + y) * wo + xo;
                out[o] = best;
                arg[o] = bi;
            }
        }
    }
    (out, arg)
}

/// Source taps for one axis of an align-corners-false bilinear resize.
#[derive(Debug, Clone, Copy)]
pub struct Tap {
    pub i0: usize,
    pub i1: usize,
    pub w1: f64,
}

pub fn bilinear_taps(n_in: usize, n_out: usize) -> Vec<Tap> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
            let i0 = (libm::floor(src) as usize).min(n_in - 1);
            let i1 = (i0 + 1).min(n_in - 1);
            let w1 = if i1 == i0 { 0.0 } else { src - i0 as f64 };
            Tap { i0, i1, w1 }
        })
        .collect()
}

pub fn resize_forward(x: &[f64], c: usize, h: usize, w: usize, ho: usize, wo: usize) -> Vec<f64> {
    let ty = bilinear_taps(h, ho);
    let tx = bilinear_taps(w, wo);
    let mut out = vec![0.0; c * ho * wo];
    for ch in 0..c {
        let src = &x[ch * h * w..(ch + 1) * h * w];
        for (y, a) in ty.iter().enumerate() {
            for (xo, b) in tx.iter().enumerate() {
                let top = src[a.i0 * w + b.i0] * (1.0 - b.w1) + src[a.i0 * w + b.i1] * b.w1;
                let bot = src[a.i1 * w + b.i0] * (1.0 - b.w1) + src[a.i1 * w + b.i1] * b.w1;
                out[(ch * ho + y) * wo + xo] = top * (1.0 - a.w1) + bot * a.w1;
            }
        }
    }
    out
}

pub fn resize_backward(
    dout: &[f64],
    c: usize,
    h: usize,
    w: usize,
    ho: usize,
    wo: usize,
) -> Vec<f64> {
    let ty = bilinear_taps(h, ho);
    let tx = bilinear_taps(w, wo);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        let dst = &mut dx[ch * h * w..(ch + 1) * h * w];
        for (y, a) in ty.iter().enumerate() {
            for (xo, b) in tx.iter().enumerate() {
                let g = dout[(ch * ho + y) * wo + xo];
                dst[a.i0 * w + b.i0] += g * (1.0 - a.w1) * (1.0 - b.w1);
                dst[a.i0 * w + b.i1] += g * (1.0 - a.w1) * b.w1;
                dst[a.i1 * w + b.i0] += g * a.w1 * (1.0 - b.w1);
                dst[a.i1 * w + b.i1] += g * a.w1 * b.w1;
            }
        }
    }
    dx
}

/// Adaptive-average-pool cell boundaries along one axis.
pub fn adaptive_bounds(n_in: usize, bins: usize) -> Vec<(usize, usize)> {
    (0..bins)
        .map(|i| ((i * n_in) / bins, ((i + 1) * n_in).div_ceil(bins)))
        .collect()
}

pub fn adaptive_avg_pool_forward(x: &[f64], c: usize, h: usize, w: usize, bins: usize) -> Vec<f64> {
    let by = adaptive_bounds(h, bins);
    let bx = adaptive_bounds(w, bins);
    let mut out = vec![0.0; c * bins * bins];
    for ch in 0..c {
        for (i, &(y0, y1)) in by.iter().enumerate() {
            for (j, &(x0, x1)) in bx.iter().enumerate() {
                let mut s = 0.0;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        s += x[(ch * h + y) * w + xx];
                    }
                }
                out[(ch * bins + i) * bins + j] = s / ((y1 - y0) * (x1 - x0)) as f64;
            }
        }
    }
    out
}

pub fn adaptive_avg_pool_backward(
    dout: &[f64],
    c: usize,
    h: usize,
    w: usize,
    bins: usize,
) -> Vec<f64> {
    let by = adaptive_bounds(h, bins);
    let bx = adaptive_bounds(w, bins);
    let mut dx = vec![0.0; c * h * w];
    for ch in 0..c {
        for (i, &(y0, y1)) in by.iter().enumerate() {
            for (j, &(x0, x1)) in bx.iter().enumerate() {
                let g = dout[(ch * bins + i) * bins + j] / ((y1 - y0) * (x1 - x0)) as f64;
                for y in y0..y1 {
                    for xx in x0..x1 {
                        dx[(ch * h + y) * w + xx] += g;
                    }
                }
            }
        }
    }
    dx
}

pub(crate) fn expect_rank(t: &Tensor, rank: usize, op: &str) -> Result<()> {
    if t.rank() != rank {
        return Err(shape_err!(
            "{op} expects rank {rank}, got shape {:?}",
            t.shape()
        ));
    }
    Ok(())
}
