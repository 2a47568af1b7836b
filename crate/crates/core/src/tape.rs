//! Reverse-mode differentiation tape.
//!
//! Every operation appends one node holding its forward value; `backward`
//! walks the nodes once, newest first, pushing adjoints to their parents.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::kernels::{self, expect_rank, ConvGeom};
use crate::param::{ParamId, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Log(Var),
    Exp(Var),
    Relu(Var),
    Sigmoid(Var),
    Clamp(Var, f64, f64),
    Sum(Var),
    Mean(Var),
    Index(Var, usize),
    Reshape(Var),
    Conv2d {
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        geom: ConvGeom,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
        rows: usize,
        n_in: usize,
        n_out: usize,
    },
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        shift: Var,
        xhat: Vec<f64>,
        inv: Vec<f64>,
    },
    Attention {
        q: Var,
        k: Var,
        v: Var,
        p: Vec<f64>,
        nq: usize,
        nk: usize,
        d: usize,
        dv: usize,
    },
    GroupedAttention {
        q: Var,
        k: Var,
        v: Var,
        groups: Arc<Vec<Vec<usize>>>,
        heads: usize,
        probs: Vec<Vec<f64>>,
    },
    MaxPool2 {
        x: Var,
        arg: Vec<usize>,
    },
    Resize {
        x: Var,
        c: usize,
        h: usize,
        w: usize,
        ho: usize,
        wo: usize,
    },
    AdaptiveAvgPool {
        x: Var,
        c: usize,
        h: usize,
        w: usize,
        bins: usize,
    },
    GlobalAvgPool(Var),
    GlobalMaxPool {
        x: Var,
        arg: Vec<usize>,
    },
    ChannelMean(Var),
    ChannelMax {
        x: Var,
        arg: Vec<usize>,
    },
    ScaleChannels(Var, Var),
    ScaleSpatial(Var, Var),
    ScaleByScalar(Var, Var),
    Concat(Vec<Var>),
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    SumRows(Var),
    Tokens {
        patches: Var,
        cls: Var,
        space: Var,
        time: Var,
        t: usize,
        n: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints produced by [`Tape::backward`], one slot per node.
#[derive(Debug)]
pub struct Grads {
    slots: Vec<Option<Tensor>>,
}

impl Grads {
    /// Gradient of the loss with respect to `v`; zeros if `v` did not influence it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> Tensor {
        self.slots[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(tape.value(v).shape()))
    }

    /// Adds every parameter-leaf adjoint into the store's gradient buffers.
    pub fn accumulate_into(&self, tape: &Tape, store: &mut ParamStore) {
        for (node, slot) in tape.nodes.iter().zip(&self.slots) {
            if let (Op::Param(id), Some(g)) = (&node.op, slot) {
                store.grad_mut(*id).add_assign(g);
            }
        }
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = self.value(a).zip_map(self.value(b), |x, y| x / y)?;
        Ok(self.push(out, Op::Div(a, b)))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x + k);
        self.push(out, Op::AddScalar(a))
    }

    pub fn mul_scalar(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::MulScalar(a, k))
    }

    pub fn log(&mut self, a: Var) -> Var {
        let out = self.value(a).map(libm::log);
        self.push(out, Op::Log(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let out = self.value(a).map(libm::exp);
        self.push(out, Op::Exp(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).map(|x| x.max(0.0));
        self.push(out, Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Clamp with pass-through gradient strictly inside `[lo, hi]`.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Var {
        let out = self.value(a).map(|x| x.clamp(lo, hi));
        self.push(out, Op::Clamp(a, lo, hi))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).sum();
        self.push(Tensor::scalar(s), Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let s = self.value(a).mean();
        self.push(Tensor::scalar(s), Op::Mean(a))
    }

    /// Selects one flat element as a scalar.
    pub fn index(&mut self, a: Var, i: usize) -> Result<Var> {
        let v = *self
            .value(a)
            .data()
            .get(i)
            .ok_or_else(|| invalid!("index {i} out of range"))?;
        Ok(self.push(Tensor::scalar(v), Op::Index(a, i)))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(a).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(a)))
    }

    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        pad: usize,
    ) -> Result<Var> {
        let geom = ConvGeom::new(
            self.value(input).shape(),
            self.value(kernel).shape(),
            stride,
            pad,
        )?;
        if let Some(b) = bias {
            if self.value(b).shape() != [geom.c_out] {
                return Err(shape_err!(
                    "conv2d bias {:?} for {} outputs",
                    self.value(b).shape(),
                    geom.c_out
                ));
            }
        }
        let data = kernels::conv2d_forward(
            &geom,
            self.value(input).data(),
            self.value(kernel).data(),
            bias.map(|b| self.value(b).data()),
        );
        let out = Tensor::from_parts(vec![geom.c_out, geom.h_out, geom.w_out], data);
        Ok(self.push(
            out,
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            },
        ))
    }

    /// Affine map of each row: `x` is `[n_in]` or `[rows, n_in]`, `w` is `[n_out, n_in]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        let (rows, n_in) = match xs.as_slice() {
            [n] => (1, *n),
            [r, n] => (*r, *n),
            _ => return Err(shape_err!("linear input must be rank 1 or 2, got {:?}", xs)),
        };
        if ws.len() != 2 || ws[1] != n_in {
            return Err(shape_err!("linear weight {:?} for input {:?}", ws, xs));
        }
        let n_out = ws[0];
        if let Some(b) = b {
            if self.value(b).shape() != [n_out] {
                return Err(shape_err!(
                    "linear bias {:?} for {} outputs",
                    self.value(b).shape(),
                    n_out
                ));
            }
        }
        let data = kernels::linear_forward(
            self.value(x).data(),
            rows,
            n_in,
            self.value(w).data(),
            n_out,
            b.map(|b| self.value(b).data()),
        );
        let shape = if xs.len() == 1 {
            vec![n_out]
        } else {
            vec![rows, n_out]
        };
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::Linear {
                x,
                w,
                b,
                rows,
                n_in,
                n_out,
            },
        ))
    }

    /// Softmax along the last axis.
    pub fn softmax(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let out = Tensor::from_parts(
            t.shape().to_vec(),
            kernels::softmax_rows(t.data(), t.last_dim()),
        );
        self.push(out, Op::Softmax(a))
    }

    /// Layer normalization along the last axis.
    pub fn layer_norm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let d = self.value(x).last_dim();
        if self.value(gain).shape() != [d] || self.value(shift).shape() != [d] {
            return Err(shape_err!(
                "layer_norm affine parameters must have extent {d}"
            ));
        }
        let (out, xhat, inv) = kernels::layer_norm_forward(
            self.value(x).data(),
            d,
            self.value(gain).data(),
            self.value(shift).data(),
            eps,
        );
        let shape = self.value(x).shape().to_vec();
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                inv,
            },
        ))
    }

    /// Single-head scaled dot-product attention: `q [nq,d]`, `k [nk,d]`, `v [nk,dv]`.
    pub fn attention(&mut self, q: Var, k: Var, v: Var) -> Result<Var> {
        let (qs, ks, vs) = (
            self.value(q).shape(),
            self.value(k).shape(),
            self.value(v).shape(),
        );
        if qs.len() != 2 || ks.len() != 2 || vs.len() != 2 || qs[1] != ks[1] || ks[0] != vs[0] {
            return Err(shape_err!("attention q {:?} k {:?} v {:?}", qs, ks, vs));
        }
        let (nq, d, nk, dv) = (qs[0], qs[1], ks[0], vs[1]);
        let (out, p) = kernels::attention_forward(
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
            nq,
            nk,
            d,
            dv,
        );
        Ok(self.push(
            Tensor::from_parts(vec![nq, dv], out),
            Op::Attention {
                q,
                k,
                v,
                p,
                nq,
                nk,
                d,
                dv,
            },
        ))
    }

    /// Multi-head self-attention restricted to row groups.
    ///
    /// `q`, `k`, `v` are `[rows, dim]`; each group lists the rows that attend
    /// to one another. Groups must partition the rows. Columns are split into
    /// `heads` equal slices.
    pub fn grouped_attention(
        &mut self,
        q: Var,
        k: Var,
        v: Var,
        groups: Arc<Vec<Vec<usize>>>,
        heads: usize,
    ) -> Result<Var> {
        let shape = self.value(q).shape().to_vec();
        if shape.len() != 2
            || self.value(k).shape() != shape.as_slice()
            || self.value(v).shape() != shape.as_slice()
        {
            return Err(shape_err!(
                "grouped attention needs equal [rows, dim] q/k/v"
            ));
        }
        let (rows, dim) = (shape[0], shape[1]);
        if heads == 0 || dim % heads != 0 {
            return Err(invalid!("dim {dim} not divisible by {heads} heads"));
        }
        let covered: usize = groups.iter().map(Vec::len).sum();
        if covered != rows || groups.iter().flatten().any(|&r| r >= rows) {
            return Err(invalid!("attention groups must partition {rows} rows"));
        }
        let dh = dim / heads;
        let (qd, kd, vd) = (
            self.value(q).data(),
            self.value(k).data(),
            self.value(v).data(),
        );
        let mut out = vec![0.0; rows * dim];
        let mut probs = Vec::with_capacity(groups.len() * heads);
        for g in groups.iter() {
            for h in 0..heads {
                let qg = gather(qd, g, dim, h * dh, dh);
                let kg = gather(kd, g, dim, h * dh, dh);
                let vg = gather(vd, g, dim, h * dh, dh);
                let (o, p) = kernels::attention_forward(&qg, &kg, &vg, g.len(), g.len(), dh, dh);
                scatter_add(&mut out, &o, g, dim, h * dh, dh);
                probs.push(p);
            }
        }
        Ok(self.push(
            Tensor::from_parts(shape, out),
            Op::GroupedAttention {
                q,
                k,
                v,
                groups,
                heads,
                probs,
            },
        ))
    }

    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        expect_rank(self.value(x), 3, "max_pool2")?;
        let s = self.value(x).shape().to_vec();
        let (out, arg) = kernels::max_pool2_forward(self.value(x).data(), s[0], s[1], s[2]);
        let shape = vec![s[0], s[1].div_ceil(2), s[2].div_ceil(2)];
        Ok(self.push(Tensor::from_parts(shape, out), Op::MaxPool2 { x, arg }))
    }

    /// Bilinear resize of a `[C,H,W]` tensor (align-corners-false).
    pub fn resize(&mut self, x: Var, ho: usize, wo: usize) -> Result<Var> {
        expect_rank(self.value(x), 3, "resize")?;
        if ho == 0 || wo == 0 {
            return Err(invalid!("resize target must be non-empty"));
        }
        let s = self.value(x).shape().to_vec();
        let (c, h, w) = (s[0], s[1], s[2]);
        let out = kernels::resize_forward(self.value(x).data(), c, h, w, ho, wo);
        Ok(self.push(
            Tensor::from_parts(vec![c, ho, wo], out),
            Op::Resize { x, c, h, w, ho, wo },
        ))
    }

    pub fn upsample2(&mut self, x: Var) -> Result<Var> {
        expect_rank(self.value(x), 3, "upsample2")?;
        let s = self.value(x).shape().to_vec();
        self.resize(x, 2 * s[1], 2 * s[2])
    }

    pub fn adaptive_avg_pool(&mut self, x: Var, bins: usize) -> Result<Var> {
        expect_rank(self.value(x), 3, "adaptive_avg_pool")?;
        let s = self.value(x).shape().to_vec();
        let (c, h, w) = (s[0], s[1], s[2]);
        if bins == 0 || bins > h || bins > w {
            return Err(invalid!(
                "pooling bin {bins} exceeds feature extent {h}x{w}"
            ));
        }
        let out = kernels::adaptive_avg_pool_forward(self.value(x).data(), c, h, w, bins);
        Ok(self.push(
            Tensor::from_parts(vec![c, bins, bins], out),
            Op::AdaptiveAvgPool { x, c, h, w, bins },
        ))
    }

    /// `[C,H,W]` → `[C]` spatial mean.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        expect_rank(self.value(x), 3, "global_avg_pool")?;
        let t = self.value(x);
        let c = t.shape()[0];
        let plane = t.len() / c;
        let out: Vec<f64> = t
            .data()
            .chunks(plane)
            .map(|p| p.iter().sum::<f64>() / plane as f64)
            .collect();
        Ok(self.push(Tensor::from_parts(vec![c], out), Op::GlobalAvgPool(x)))
    }

    /// `[C,H,W]` → `[C]` spatial max.
    pub fn global_max_pool(&mut self, x: Var) -> Result<Var> {
        expect_rank(self.value(x), 3, "global_max_pool")?;
        let t = self.value(x);
        let c = t.shape()[0];
        let plane = t.len() / c;
        let mut out = Vec::with_capacity(c);
        let mut arg = Vec::with_capacity(c);
        for (ch, p) in t.data().chunks(plane).enumerate() {
            let (i, m) = argmax(p);
            out.push(m);
            arg.push(ch * plane + i);
        }
        Ok(self.push(
            Tensor::from_parts(vec![c], out),
            Op::GlobalMaxPool { x, arg },
        ))
    }

    /// `[C,H,W]` → `[1,H,W]` mean over channels.
    pub fn channel_mean(&mut self, x: Var) -> Result<Var> {
        expect_rank(self.value(x), 3, "channel_mean")?;
        let t = self.value(x);
        let s = t.shape();
        let (c, plane) = (s[0], s[1] * s[2]);
        let mut out = vec![0.0; plane];
        for p in t.data().chunks(plane) {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= c as f64);
        let shape = vec![1, s[1], s[2]];
        Ok(self.push(Tensor::from_parts(shape, out), Op::ChannelMean(x)))
    }

    /// `[C,H,W]` → `[1,H,W]` max over channels.
    pub fn channel_max(&mut self, x: Var) -> Result<Var> {
        expect_rank(self.value(x), 3, "channel_max")?;
        let t = self.value(x);
        let s = t.shape();
        let (c, plane) = (s[0], s[1] * s[2]);
        let d = t.data();
        let mut out = vec![f64::NEG_INFINITY; plane];
        let mut arg = vec![0usize; plane];
        for ch in 0..c {
            for i in 0..plane {
                let v = d[ch * plane + i];
                if v > out[i] {
                    out[i] = v;
                    arg[i] = ch * plane + i;
                }
            }
        }
        let shape = vec![1, s[1], s[2]];
        Ok(self.push(Tensor::from_parts(shape, out), Op::ChannelMax { x, arg }))
    }

    /// `x [C,H,W]` times per-channel gate `g [C]`.
    pub fn scale_channels(&mut self, x: Var, g: Var) -> Result<Var> {
        expect_rank(self.value(x), 3, "scale_channels")?;
        let c = self.value(x).shape()[0];
        if self.value(g).shape() != [c] {
            return Err(shape_err!(
                "channel gate {:?} for {c} channels",
                self.value(g).shape()
            ));
        }
        let plane = self.value(x).len() / c;
        let gd = self.value(g).data();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * gd[i / plane])
            .collect();
        let shape = self.value(x).shape().to_vec();
        Ok(self.push(Tensor::from_parts(shape, data), Op::ScaleChannels(x, g)))
    }

    /// `x [C,H,W]` times per-position gate `g [1,H,W]`.
    pub fn scale_spatial(&mut self, x: Var, g: Var) -> Result<Var> {
        expect_rank(self.value(x), 3, "scale_spatial")?;
        let s = self.value(x).shape().to_vec();
        if self.value(g).shape() != [1, s[1], s[2]] {
            return Err(shape_err!(
                "spatial gate {:?} for {:?}",
                self.value(g).shape(),
                s
            ));
        }
        let plane = s[1] * s[2];
        let gd = self.value(g).data();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .iter()
            .enumerate()
            .map(|(i, v)| v * gd[i % plane])
            .collect();
        Ok(self.push(Tensor::from_parts(s, data), Op::ScaleSpatial(x, g)))
    }

    /// Any tensor times a one-element tensor.
    pub fn scale_by(&mut self, x: Var, s: Var) -> Result<Var> {
        let k = self.value(s).item()?;
        let out = self.value(x).scale(k);
        Ok(self.push(out, Op::ScaleByScalar(x, s)))
    }

    /// Concatenation along axis 0; trailing extents must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(Error::Empty("concat"))?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut lead = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape()[1..] != tail[..] {
                return Err(shape_err!(
                    "concat trailing extents {:?} vs {:?}",
                    &t.shape()[1..],
                    tail
                ));
            }
            lead += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![lead];
        shape.extend_from_slice(&tail);
        Ok(self.push(Tensor::from_parts(shape, data), Op::Concat(parts.to_vec())))
    }

    /// Rows of a `[R,D]` tensor, in the order given (repeats allowed).
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        expect_rank(self.value(x), 2, "select_rows")?;
        let s = self.value(x).shape();
        let (r, d) = (s[0], s[1]);
        if rows.is_empty() || rows.iter().any(|&i| i >= r) {
            return Err(invalid!("row selection out of range for {r} rows"));
        }
        let src = self.value(x).data();
        let mut data = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            data.extend_from_slice(&src[i * d..(i + 1) * d]);
        }
        Ok(self.push(
            Tensor::from_parts(vec![rows.len(), d], data),
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
        ))
    }

    /// `[R,D]` → `[D]` sum over rows, accumulated in ascending row order.
    pub fn sum_rows(&mut self, x: Var) -> Result<Var> {
        expect_rank(self.value(x), 2, "sum_rows")?;
        let d = self.value(x).shape()[1];
        let mut out = vec![0.0; d];
        for row in self.value(x).data().chunks(d) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += v;
            }
        }
        Ok(self.push(Tensor::from_parts(vec![d], out), Op::SumRows(x)))
    }

    /// Assembles a `[T·(N+1), D]` token sequence from patch embeddings
    /// `[T·N, D]`: per time step a classification token followed by the
    /// N patch tokens; space offsets `[N,D]` go on patch tokens, time offsets
    /// `[T,D]` on every token of that step.
    pub fn tokens(&mut self, patches: Var, cls: Var, space: Var, time: Var) -> Result<Var> {
        let ts = self.value(time).shape().to_vec();
        let ss = self.value(space).shape().to_vec();
        if ts.len() != 2 || ss.len() != 2 || ts[1] != ss[1] {
            return Err(shape_err!("token offsets {:?} / {:?}", ss, ts));
        }
        let (t, n, d) = (ts[0], ss[0], ts[1]);
        if self.value(patches).shape() != [t * n, d] || self.value(cls).shape() != [1, d] {
            return Err(shape_err!(
                "token inputs {:?} / {:?} for T={t} N={n} D={d}",
                self.value(patches).shape(),
                self.value(cls).shape()
            ));
        }
        let (pd, cd, sd, td) = (
            self.value(patches).data(),
            self.value(cls).data(),
            self.value(space).data(),
            self.value(time).data(),
        );
        let mut out = vec![0.0; t * (n + 1) * d];
        for step in 0..t {
            let base = step * (n + 1) * d;
            for c in 0..d {
                out[base + c] = cd[c] + td[step * d + c];
            }
            for tok in 0..n {
                let o = base + (tok + 1) * d;
                let p = (step * n + tok) * d;
                for c in 0..d {
                    out[o + c] = pd[p + c] + sd[tok * d + c] + td[step * d + c];
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![t * (n + 1), d], out),
            Op::Tokens {
                patches,
                cls,
                space,
                time,
                t,
                n,
            },
        ))
    }

    /// Reverse sweep from a one-element loss.
    pub fn backward(&self, loss: Var) -> Result<Grads> {
        if self.value(loss).len() != 1 {
            return Err(shape_err!(
                "backward needs a scalar loss, got {:?}",
                self.value(loss).shape()
            ));
        }
        let mut slots: Vec<Option<Tensor>> = Vec::new();
        slots.resize_with(loss.0 + 1, || None);
        slots[loss.0] = Some(Tensor::full(self.value(loss).shape(), 1.0));
        for i in (0..=loss.0).rev() {
            let Some(g) = slots[i].take() else { continue };
            self.backprop_node(i, &g, &mut slots);
            slots[i] = Some(g);
        }
        slots.resize_with(self.nodes.len(), || None);
        Ok(Grads { slots })
    }

    fn backprop_node(&self, i: usize, g: &Tensor, slots: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let val = |v: Var| &self.nodes[v.0].value;
        let shaped = |v: Var, data: Vec<f64>| {
            Tensor::from_parts(self.nodes[v.0].value.shape().to_vec(), data)
        };
        let gd = g.data();
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::Add(a, b) => {
                acc(slots, *a, g.clone());
                acc(slots, *b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(slots, *a, g.clone());
                acc(slots, *b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(*a), val(*b));
                acc(slots, *a, g.zip_map(bv, |x, y| x * y).expect("shape"));
                acc(slots, *b, g.zip_map(av, |x, y| x * y).expect("shape"));
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(*a).data(), val(*b).data());
                let da: Vec<f64> = gd.iter().zip(bv).map(|(g, b)| g / b).collect();
                let db: Vec<f64> = gd
                    .iter()
                    .zip(av.iter().zip(bv))
                    .map(|(g, (a, b))| -g * a / (b * b))
                    .collect();
                acc(slots, *a, shaped(*a, da));
                acc(slots, *b, shaped(*b, db));
            }
            Op::AddScalar(a) => acc(slots, *a, g.clone()),
            Op::MulScalar(a, k) => acc(slots, *a, g.scale(*k)),
            Op::Log(a) => {
                let d: Vec<f64> = gd.iter().zip(val(*a).data()).map(|(g, x)| g / x).collect();
                acc(slots, *a, shaped(*a, d));
            }
            Op::Exp(a) => {
                let d: Vec<f64> = gd
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y)
                    .collect();
                acc(slots, *a, shaped(*a, d));
            }
            Op::Relu(a) => {
                let d: Vec<f64> = gd
                    .iter()
                    .zip(val(*a).data())
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect();
                acc(slots, *a, shaped(*a, d));
            }
            Op::Sigmoid(a) => {
                let d: Vec<f64> = gd
                    .iter()
                    .zip(node.value.data())
                    .map(|(g, y)| g * y * (1.0 - y))
                    .collect();
                acc(slots, *a, shaped(*a, d));
            }
            Op::Clamp(a, lo, hi) => {
                let d: Vec<f64> = gd
                    .iter()
                    .zip(val(*a).data())
                    .map(|(g, &x)| if x > *lo && x < *hi { *g } else { 0.0 })
                    .collect();
                acc(slots, *a, shaped(*a, d));
            }
            Op::Sum(a) => acc(slots, *a, Tensor::full(val(*a).shape(), gd[0])),
            Op::Mean(a) => {
                let n = val(*a).len() as f64;
                acc(slots, *a, Tensor::full(val(*a).shape(), gd[0] / n));
            }
            Op::Index(a, idx) => {
                let mut t = Tensor::zeros(val(*a).shape());
                t.data_mut()[*idx] = gd[0];
                acc(slots, *a, t);
            }
            Op::Reshape(a) => acc(slots, *a, shaped(*a, gd.to_vec())),
            Op::Conv2d {
                input,
                kernel,
                bias,
                geom,
            } => {
                let (din, dk, db) =
                    kernels::conv2d_backward(geom, val(*input).data(), val(*kernel).data(), gd);
                acc(slots, *input, shaped(*input, din));
                acc(slots, *kernel, shaped(*kernel, dk));
                if let Some(b) = bias {
                    acc(slots, *b, shaped(*b, db));
                }
            }
            Op::Linear {
                x,
                w,
                b,
                rows,
                n_in,
                n_out,
            } => {
                let (dx, dw, db) = kernels::linear_backward(
                    val(*x).data(),
                    *rows,
                    *n_in,
                    val(*w).data(),
                    *n_out,
                    gd,
                );
                acc(slots, *x, shaped(*x, dx));
                acc(slots, *w, shaped(*w, dw));
                if let Some(b) = b {
                    acc(slots, *b, shaped(*b, db));
                }
            }
            Op::Softmax(a) => {
                let d =
                    kernels::softmax_rows_backward(node.value.data(), gd, node.value.last_dim());
                acc(slots, *a, shaped(*a, d));
            }
            Op::LayerNorm {
                x,
                gain,
                shift,
                xhat,
                inv,
            } => {
                let d = node.value.last_dim();
                let (dx, dg, db) =
                    kernels::layer_norm_backward(xhat, inv, val(*gain).data(), gd, d);
                acc(slots, *x, shaped(*x, dx));
                acc(slots, *gain, shaped(*gain, dg));
                acc(slots, *shift, shaped(*shift, db));
            }
            Op::Attention {
                q,
                k,
                v,
                p,
                nq,
                nk,
                d,
                dv,
            } => {
                let (dq, dk, dvv) = kernels::attention_backward(
                    val(*q).data(),
                    val(*k).data(),
                    val(*v).data(),
                    p,
                    gd,
                    *nq,
                    *nk,
                    *d,
                    *dv,
                );
                acc(slots, *q, shaped(*q, dq));
                acc(slots, *k, shaped(*k, dk));
                acc(slots, *v, shaped(*v, dvv));
            }
            Op::GroupedAttention {
                q,
                k,
                v,
                groups,
                heads,
                probs,
            } => {
                let dim = node.value.shape()[1];
                let dh = dim / heads;
                let (qd, kd, vd) = (val(*q).data(), val(*k).data(), val(*v).data());
                let mut dq = vec![0.0; qd.len()];
                let mut dk = vec![0.0; kd.len()];
                let mut dvv = vec![0.0; vd.len()];
                let mut pi = 0;
                for grp in groups.iter() {
                    let n = grp.len();
                    for h in 0..*heads {
                        let off = h * dh;
                        let (qg, kg, vg) = (
                            gather(qd, grp, dim, off, dh),
                            gather(kd, grp, dim, off, dh),
                            gather(vd, grp, dim, off, dh),
                        );
                        let og = gather(gd, grp, dim, off, dh);
                        let (a, b, c) = kernels::attention_backward(
                            &qg, &kg, &vg, &probs[pi], &og, n, n, dh, dh,
                        );
                        scatter_add(&mut dq, &a, grp, dim, off, dh);
                        scatter_add(&mut dk, &b, grp, dim, off, dh);
                        scatter_add(&mut dvv, &c, grp, dim, off, dh);
                        pi += 1;
                    }
                }
                acc(slots, *q, shaped(*q, dq));
                acc(slots, *k, shaped(*k, dk));
                acc(slots, *v, shaped(*v, dvv));
            }
            Op::MaxPool2 { x, arg } | Op::GlobalMaxPool { x, arg } | Op::ChannelMax { x, arg } => {
                let mut d = vec![0.0; val(*x).len()];
                for (g, &src) in gd.iter().zip(arg) {
                    d[src] += g;
                }
                acc(slots, *x, shaped(*x, d));
            }
            Op::Resize { x, c, h, w, ho, wo } => {
                let d = kernels::resize_backward(gd, *c, *h, *w, *ho, *wo);
                acc(slots, *x, shaped(*x, d));
            }
            Op::AdaptiveAvgPool { x, c, h, w, bins } => {
                let d = kernels::adaptive_avg_pool_backward(gd, *c, *h, *w, *bins);
                acc(slots, *x, shaped(*x, d));
            }
            Op::GlobalAvgPool(x) => {
                let n = val(*x).len();
                let plane = n / gd.len();
                let d: Vec<f64> = (0..n).map(|i| gd[i / plane] / plane as f64).collect();
                acc(slots, *x, shaped(*x, d));
            }
            Op::ChannelMean(x) => {
                let n = val(*x).len();
                let plane = gd.len();
                let c = (n / plane) as f64;
                let d: Vec<f64> = (0..n).map(|i| gd[i % plane] / c).collect();
                acc(slots, *x, shaped(*x, d));
            }
            Op::ScaleChannels(x, gate) => {
                let xd = val(*x).data();
                let gt = val(*gate).data();
                let plane = xd.len() / gt.len();
                let dx: Vec<f64> = gd
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * gt[i / plane])
                    .collect();
                let mut dg = vec![0.0; gt.len()];
                for (i, g) in gd.iter().enumerate() {
                    dg[i / plane] += g * xd[i];
                }
                acc(slots, *x, shaped(*x, dx));
                acc(slots, *gate, shaped(*gate, dg));
            }
            Op::ScaleSpatial(x, gate) => {
                let xd = val(*x).data();
                let gt = val(*gate).data();
                let plane = gt.len();
                let dx: Vec<f64> = gd
                    .iter()
                    .enumerate()
                    .map(|(i, g)| g * gt[i % plane])
                    .collect();
                let mut dg = vec![0.0; plane];
                for (i, g) in gd.iter().enumerate() {
                    dg[i % plane] += g * xd[i];
                }
                acc(slots, *x, shaped(*x, dx));
                acc(slots, *gate, shaped(*gate, dg));
            }
            Op::ScaleByScalar(x, s) => {
                let k = val(*s).data()[0];
                let ds: f64 = gd.iter().zip(val(*x).data()).map(|(g, x)| g * x).sum();
                acc(slots, *x, g.scale(k));
                acc(slots, *s, shaped(*s, vec![ds]));
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = val(p).len();
                    acc(slots, p, shaped(p, gd[off..off + n].to_vec()));
                    off += n;
                }
            }
            Op::SelectRows { x, rows } => {
                let d = val(*x).shape()[1];
                let mut dx = vec![0.0; val(*x).len()];
                for (k, &r) in rows.iter().enumerate() {
                    for c in 0..d {
                        dx[r * d + c] += gd[k * d + c];
                    }
                }
                acc(slots, *x, shaped(*x, dx));
            }
            Op::SumRows(x) => {
                let n = val(*x).len();
                let d = gd.len();
                let dx: Vec<f64> = (0..n).map(|i| gd[i % d]).collect();
                acc(slots, *x, shaped(*x, dx));
            }
            Op::Tokens {
                patches,
                cls,
                space,
                time,
                t,
                n,
            } => {
                let d = node.value.shape()[1];
                let mut dp = vec![0.0; t * n * d];
                let mut dc = vec![0.0; d];
                let mut ds = vec![0.0; n * d];
                let mut dt = vec![0.0; t * d];
                for step in 0..*t {
                    let base = step * (n + 1) * d;
                    for c in 0..d {
                        dc[c] += gd[base + c];
                        dt[step * d + c] += gd[base + c];
                    }
                    for tok in 0..*n {
                        let o = base + (tok + 1) * d;
                        for c in 0..d {
                            let gv = gd[o + c];
                            dp[(step * n + tok) * d + c] += gv;
                            ds[tok * d + c] += gv;
                            dt[step * d + c] += gv;
                        }
                    }
                }
                acc(slots, *patches, shaped(*patches, dp));
                acc(slots, *cls, shaped(*cls, dc));
                acc(slots, *space, shaped(*space, ds));
                acc(slots, *time, shaped(*time, dt));
            }
        }
    }
}

fn acc(slots: &mut [Option<Tensor>], v: Var, g: Tensor) {
    match &mut slots[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn gather(src: &[f64], rows: &[usize], dim: usize, off: usize, width: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * width);
    for &r in rows {
        out.extend_from_slice(&src[r * dim + off..r * dim + off + width]);
    }
    out
}

fn scatter_add(dst: &mut [f64], src: &[f64], rows: &[usize], dim: usize, off: usize, width: usize) {
    for (k, &r) in rows.iter().enumerate() {
        for c in 0..width {
            dst[r * dim + off + c] += src[k * width + c];
        }
    }
}

fn argmax(xs: &[f64]) -> (usize, f64) {
    xs.iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, v)| {
            if v > bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}
