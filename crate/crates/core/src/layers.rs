//! Tape-free primitive operations and the parameterised layers built on the tape.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, shape_err, Error, Result};
use crate::kernels::{self, expect_rank, ConvGeom};
use crate::param::{ParamId, ParamStore};
use crate::tape::{self, Tape, Var};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Activation {
    Relu,
    Sigmoid,
}

fn check_finite(t: &Tensor, op: &'static str) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(op))
    }
}

/// Zero-padded cross-correlation of `[C_in,H,W]` with `[C_out,C_in,k,k]`.
pub fn conv2d(input: &Tensor, kernel: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    check_finite(input, "conv2d input")?;
    let g = ConvGeom::new(input.shape(), kernel.shape(), stride, padding)?;
    let out = kernels::conv2d_forward(&g, input.data(), kernel.data(), None);
    Ok(Tensor::from_parts(vec![g.c_out, g.h_out, g.w_out], out))
}

/// `weight [m,n] · input [n] + bias [m]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: &Tensor) -> Result<Tensor> {
    check_finite(input, "dense input")?;
    let (m, n) = match weight.shape() {
        [m, n] => (*m, *n),
        s => return Err(shape_err!("dense weight must be [m,n], got {:?}", s)),
    };
    if input.shape() != [n] || bias.shape() != [m] {
        return Err(shape_err!(
            "dense input {:?} / bias {:?} for weight [{m},{n}]",
            input.shape(),
            bias.shape()
        ));
    }
    Ok(Tensor::from_vec(kernels::linear_forward(
        input.data(),
        1,
        n,
        weight.data(),
        m,
        Some(bias.data()),
    )))
}

pub fn activation(kind: Activation, input: &Tensor) -> Tensor {
    match kind {
        Activation::Relu => input.map(|x| x.max(0.0)),
        Activation::Sigmoid => input.map(tape::sigmoid),
    }
}

/// Max-subtracted softmax along `axis`.
pub fn softmax(input: &Tensor, axis: usize) -> Result<Tensor> {
    check_finite(input, "softmax input")?;
    let shape = input.shape();
    if axis >= shape.len() {
        return Err(invalid!("softmax axis {axis} for rank {}", shape.len()));
    }
    let n = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let src = input.data();
    let mut out = vec![0.0; src.len()];
    let mut lane = vec![0.0; n];
    for o in 0..outer {
        for i in 0..inner {
            for (k, l) in lane.iter_mut().enumerate() {
                *l = src[(o * n + k) * inner + i];
            }
            let y = kernels::softmax_rows(&lane, n);
            for (k, v) in y.into_iter().enumerate() {
                out[(o * n + k) * inner + i] = v;
            }
        }
    }
    Ok(Tensor::from_parts(shape.to_vec(), out))
}

/// Standardizes along the last axis, then applies `gain` and `shift`.
pub fn layer_norm(input: &Tensor, gain: &Tensor, shift: &Tensor, eps: f64) -> Result<Tensor> {
    check_finite(input, "layer_norm input")?;
    let d = input.last_dim();
    if gain.shape() != [d] || shift.shape() != [d] {
        return Err(shape_err!(
            "layer_norm affine parameters must have extent {d}"
        ));
    }
    let (out, _, _) = kernels::layer_norm_forward(input.data(), d, gain.data(), shift.data(), eps);
    Ok(Tensor::from_parts(input.shape().to_vec(), out))
}

fn attention_dims(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match (q.shape(), k.shape(), v.shape()) {
        ([nq, d], [nk, dk], [nv, dv]) if d == dk && nk == nv => Ok((*nq, *nk, *d, *dv)),
        (a, b, c) => Err(shape_err!("attention q {:?} k {:?} v {:?}", a, b, c)),
    }
}

/// `softmax(q kᵀ / √d) v` with row-wise softmax.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (nq, nk, d, dv) = attention_dims(q, k, v)?;
    let (out, _) = kernels::attention_forward(q.data(), k.data(), v.data(), nq, nk, d, dv);
    Ok(Tensor::from_parts(vec![nq, dv], out))
}

/// The `[nq, nk]` weight matrix used by [`attention`].
pub fn attention_weights(q: &Tensor, k: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (nq, nk, d, dv) = attention_dims(q, k, v)?;
    let (_, p) = kernels::attention_forward(q.data(), k.data(), v.data(), nq, nk, d, dv);
    Ok(Tensor::from_parts(vec![nq, nk], p))
}

pub fn pool_max2(input: &Tensor) -> Result<Tensor> {
    expect_rank(input, 3, "pool_max2")?;
    let s = input.shape();
    let (out, _) = kernels::max_pool2_forward(input.data(), s[0], s[1], s[2]);
    Ok(Tensor::from_parts(
        vec![s[0], s[1].div_ceil(2), s[2].div_ceil(2)],
        out,
    ))
}

pub fn upsample_bilinear2(input: &Tensor) -> Result<Tensor> {
    expect_rank(input, 3, "upsample_bilinear2")?;
    let s = input.shape();
    resize_bilinear(input, 2 * s[1], 2 * s[2])
}

/// Align-corners-false bilinear resize of a `[C,H,W]` tensor.
pub fn resize_bilinear(input: &Tensor, ho: usize, wo: usize) -> Result<Tensor> {
    expect_rank(input, 3, "resize_bilinear")?;
    if ho == 0 || wo == 0 {
        return Err(invalid!("resize target must be non-empty"));
    }
    let s = input.shape();
    let out = kernels::resize_forward(input.data(), s[0], s[1], s[2], ho, wo);
    Ok(Tensor::from_parts(vec![s[0], ho, wo], out))
}

/// 2-D convolution with bias.
#[derive(Debug, Clone, Copy)]
pub struct Conv {
    pub kernel: ParamId,
    pub bias: ParamId,
    pub stride: usize,
    pub pad: usize,
}

impl Conv {
    /// Registers `[c_out, c_in, k, k]` He-uniform weights and zero bias; padding keeps extents at stride 1.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        k: usize,
        stride: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let kernel = store.add_he(
            &format!("{name}.weight"),
            &[c_out, c_in, k, k],
            c_in * k * k,
            rng,
        );
        let bias = store.add_const(&format!("{name}.bias"), &[c_out], 0.0);
        Conv {
            kernel,
            bias,
            stride,
            pad: k / 2,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let k = tape.param(store, self.kernel);
        let b = tape.param(store, self.bias);
        tape.conv2d(x, k, Some(b), self.stride, self.pad)
    }
}

/// Fully connected layer applied to each row.
#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    /// Xavier-uniform weights, zero bias.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        n_in: usize,
        n_out: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let bound = libm::sqrt(6.0 / (n_in + n_out) as f64);
        let weight = store.add_uniform(&format!("{name}.weight"), &[n_out, n_in], bound, rng);
        let bias = store.add_const(&format!("{name}.bias"), &[n_out], 0.0);
        Linear { weight, bias }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let w = tape.param(store, self.weight);
        let b = tape.param(store, self.bias);
        tape.linear(x, w, Some(b))
    }

    pub fn params(&self) -> [ParamId; 2] {
        [self.weight, self.bias]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub shift: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gain = store.add_const(&format!("{name}.gain"), &[d], 1.0);
        let shift = store.add_const(&format!("{name}.shift"), &[d], 0.0);
        LayerNorm {
            gain,
            shift,
            eps: Self::DEFAULT_EPS,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let g = tape.param(store, self.gain);
        let s = tape.param(store, self.shift);
        tape.layer_norm(x, g, s, self.eps)
    }
}

/// Flattens a tensor list into a single vector (used by tests and diagnostics).
pub fn flatten_all(ts: &[Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}
