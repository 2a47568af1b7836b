//! Central finite-difference verification of tape gradients.

use crate::error::Result;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Coordinate error used throughout: `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    libm::fabs(analytic - numeric) / 1.0f64.max(libm::fabs(analytic)).max(libm::fabs(numeric))
}

/// Largest coordinate-wise error between the tape gradient of `f` at `x`
/// and the central difference `(f(x+h) - f(x-h)) / 2h`.
pub fn gradient_check<F>(f: F, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let leaf = tape.constant(x.clone());
    let loss = f(&mut tape, leaf)?;
    let analytic = tape.backward(loss)?.wrt(&tape, leaf);

    let eval = |point: Tensor| -> Result<f64> {
        let mut t = Tape::new();
        let v = t.constant(point);
        let out = f(&mut t, v)?;
        t.value(out).item()
    };

    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        let numeric = (eval(plus)? - eval(minus)?) / (2.0 * h);
        worst = worst.max(relative_error(analytic.data()[i], numeric));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_at_three() {
        let err = gradient_check(
            |t, x| {
                let y = t.mul(x, x)?;
                Ok(t.sum(y))
            },
            &Tensor::scalar(3.0),
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn sum_has_unit_gradient() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_vec(alloc::vec![0.3, -1.0, 2.0]));
        let s = t.sum(x);
        let g = t.backward(s).unwrap().wrt(&t, x);
        assert_eq!(g.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn sum_of_squares() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_vec(alloc::vec![1.0, 2.0]));
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq);
        let g = t.backward(s).unwrap().wrt(&t, x);
        assert_eq!(g.data(), &[2.0, 4.0]);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_vec(alloc::vec![1.0, 2.0]));
        assert!(t.backward(x).is_err());
    }
}

/// Randomized finite-difference sweep over every tape primitive.
pub mod suite {
    use alloc::sync::Arc;
    use alloc::vec;
    use alloc::vec::Vec;

    use rand::Rng;

    use super::gradient_check;
    use crate::error::Result;
    use crate::rng::{derive, SeededRng};
    use crate::tape::{Tape, Var};
    use crate::tensor::Tensor;

    pub const STEP: f64 = 1e-5;

    fn rand_tensor(rng: &mut SeededRng, shape: &[usize], lo: f64, hi: f64) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor::new(shape, (0..n).map(|_| rng.gen_range(lo..hi)).collect()).expect("shape")
    }

    /// Scalar probe `Σ out ⊙ r` with fixed random weights `r`.
    fn probe(t: &mut Tape, out: Var, weights: &Tensor) -> Result<Var> {
        let w = t.constant(weights.reshape(t.value(out).shape())?);
        let p = t.mul(out, w)?;
        Ok(t.sum(p))
    }

    /// Moves values at least 1e-3 away from a non-differentiable point.
    fn off_kink(t: &Tensor, at: f64) -> Tensor {
        t.map(|v| {
            let d = v - at;
            if d.abs() < 1e-3 {
                at + if d < 0.0 { -1e-3 } else { 1e-3 }
            } else {
                v
            }
        })
    }

    fn weights_for(rng: &mut SeededRng, n: usize) -> Tensor {
        rand_tensor(rng, &[n], -1.0, 1.0)
    }

    /// Checks `op` with respect to each of its inputs in turn.
    fn check_all<F>(inputs: &[Tensor], n_out: usize, rng: &mut SeededRng, op: F) -> Result<f64>
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let w = weights_for(rng, n_out);
        let mut worst = 0.0f64;
        for which in 0..inputs.len() {
            let err = gradient_check(
                |t, x| {
                    let vars: Vec<Var> = inputs
                        .iter()
                        .enumerate()
                        .map(|(i, v)| if i == which { x } else { t.constant(v.clone()) })
                        .collect();
                    let out = op(t, &vars)?;
                    probe(t, out, &w)
                },
                &inputs[which],
                STEP,
            )?;
            worst = worst.max(err);
        }
        Ok(worst)
    }

    /// Names of the primitives covered by [`run`].
    pub const PRIMITIVES: &[&str] = &[
        "add",
        "sub",
        "mul",
        "div",
        "log",
        "exp",
        "relu",
        "sigmoid",
        "clamp",
        "sum",
        "mean",
        "index",
        "reshape",
        "conv2d",
        "linear",
        "softmax",
        "layer_norm",
        "attention",
        "grouped_attention",
        "max_pool2",
        "resize",
        "adaptive_avg_pool",
        "global_avg_pool",
        "global_max_pool",
        "channel_mean",
        "channel_max",
        "scale_channels",
        "scale_spatial",
        "scale_by",
        "concat",
        "select_rows",
        "sum_rows",
        "tokens",
    ];

    /// Worst relative error of primitive `name` on random instance `trial`.
    pub fn check_primitive(name: &str, seed: u64, trial: u64) -> Result<f64> {
        let mut rng = derive(seed, trial);
        let r = &mut rng;
        let n = r.gen_range(2..6);
        let shape = [n, r.gen_range(1..4)];
        let len = shape[0] * shape[1];
        let a = rand_tensor(r, &shape, -1.0, 1.0);
        let b = rand_tensor(r, &shape, -1.0, 1.0);
        let pos = rand_tensor(r, &shape, 0.5, 2.0);
        match name {
            "add" => check_all(&[a, b], len, r, |t, v| t.add(v[0], v[1])),
            "sub" => check_all(&[a, b], len, r, |t, v| t.sub(v[0], v[1])),
            "mul" => check_all(&[a, b], len, r, |t, v| t.mul(v[0], v[1])),
            "div" => check_all(&[a, pos], len, r, |t, v| t.div(v[0], v[1])),
            "log" => check_all(&[pos], len, r, |t, v| Ok(t.log(v[0]))),
            "exp" => check_all(&[a], len, r, |t, v| Ok(t.exp(v[0]))),
            "relu" => check_all(&[off_kink(&a, 0.0)], len, r, |t, v| Ok(t.relu(v[0]))),
            "sigmoid" => check_all(&[a.scale(4.0)], len, r, |t, v| Ok(t.sigmoid(v[0]))),
            "clamp" => {
                let x = off_kink(&off_kink(&a, 0.5), -0.5);
                check_all(&[x], len, r, |t, v| Ok(t.clamp(v[0], -0.5, 0.5)))
            }
            "sum" => check_all(&[a], 1, r, |t, v| Ok(t.sum(v[0]))),
            "mean" => check_all(&[a], 1, r, |t, v| Ok(t.mean(v[0]))),
            "index" => {
                let i = r.gen_range(0..len);
                check_all(&[a], 1, r, move |t, v| t.index(v[0], i))
            }
            "reshape" => check_all(&[a], len, r, move |t, v| t.reshape(v[0], &[len])),
            "conv2d" => {
                let (ci, co, k) = (r.gen_range(1..3), r.gen_range(1..3), r.gen_range(1..4));
                let (h, w) = (r.gen_range(k..6), r.gen_range(k..6));
                let (stride, pad) = (r.gen_range(1..3), r.gen_range(0..2));
                let x = rand_tensor(r, &[ci, h, w], -1.0, 1.0);
                let kern = rand_tensor(r, &[co, ci, k, k], -1.0, 1.0);
                let bias = rand_tensor(r, &[co], -1.0, 1.0);
                let ho = (h + 2 * pad - k) / stride + 1;
                let wo = (w + 2 * pad - k) / stride + 1;
                check_all(&[x, kern, bias], co * ho * wo, r, move |t, v| {
                    t.conv2d(v[0], v[1], Some(v[2]), stride, pad)
                })
            }
            "linear" => {
                let (rows, ni, no) = (r.gen_range(1..4), r.gen_range(1..5), r.gen_range(1..5));
                let x = rand_tensor(r, &[rows, ni], -1.0, 1.0);
                let w = rand_tensor(r, &[no, ni], -1.0, 1.0);
                let bias = rand_tensor(r, &[no], -1.0, 1.0);
                check_all(&[x, w, bias], rows * no, r, |t, v| {
                    t.linear(v[0], v[1], Some(v[2]))
                })
            }
            "softmax" => check_all(&[a.scale(3.0)], len, r, |t, v| Ok(t.softmax(v[0]))),
            "layer_norm" => {
                let d = r.gen_range(2..6);
                let x = rand_tensor(r, &[3, d], -2.0, 2.0);
                let g = rand_tensor(r, &[d], 0.5, 1.5);
                let s = rand_tensor(r, &[d], -1.0, 1.0);
                check_all(&[x, g, s], 3 * d, r, |t, v| {
                    t.layer_norm(v[0], v[1], v[2], 1e-5)
                })
            }
            "attention" => {
                let (nq, nk, d, dv) = (
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                    r.gen_range(1..4),
                );
                let q = rand_tensor(r, &[nq, d], -1.5, 1.5);
                let k = rand_tensor(r, &[nk, d], -1.5, 1.5);
                let v = rand_tensor(r, &[nk, dv], -1.0, 1.0);
                check_all(&[q, k, v], nq * dv, r, |t, v| t.attention(v[0], v[1], v[2]))
            }
            "grouped_attention" => {
                let rows = 6;
                let heads = r.gen_range(1..3);
                let dim = heads * r.gen_range(1..3);
                let q = rand_tensor(r, &[rows, dim], -1.5, 1.5);
                let k = rand_tensor(r, &[rows, dim], -1.5, 1.5);
                let v = rand_tensor(r, &[rows, dim], -1.0, 1.0);
                let groups = Arc::new(vec![vec![0, 2, 4], vec![5, 1], vec![3]]);
                check_all(&[q, k, v], rows * dim, r, move |t, v| {
                    t.grouped_attention(v[0], v[1], v[2], groups.clone(), heads)
                })
            }
            "max_pool2" => {
                let (c, h, w) = (r.gen_range(1..3), r.gen_range(1..6), r.gen_range(1..6));
                let x = rand_tensor(r, &[c, h, w], -1.0, 1.0);
                check_all(&[x], c * h.div_ceil(2) * w.div_ceil(2), r, |t, v| {
                    t.max_pool2(v[0])
                })
            }
            "resize" => {
                let (c, h, w) = (r.gen_range(1..3), r.gen_range(1..5), r.gen_range(1..5));
                let (ho, wo) = (r.gen_range(1..8), r.gen_range(1..8));
                let x = rand_tensor(r, &[c, h, w], -1.0, 1.0);
                check_all(&[x], c * ho * wo, r, move |t, v| t.resize(v[0], ho, wo))
            }
            "adaptive_avg_pool" => {
                let (c, h, w) = (r.gen_range(1..3), r.gen_range(3..7), r.gen_range(3..7));
                let bins = r.gen_range(1..4);
                let x = rand_tensor(r, &[c, h, w], -1.0, 1.0);
                check_all(&[x], c * bins * bins, r, move |t, v| {
                    t.adaptive_avg_pool(v[0], bins)
                })
            }
            "global_avg_pool" | "global_max_pool" | "channel_mean" | "channel_max" => {
                let (c, h, w) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
                let x = rand_tensor(r, &[c, h, w], -1.0, 1.0);
                match name {
                    "global_avg_pool" => check_all(&[x], c, r, |t, v| t.global_avg_pool(v[0])),
                    "global_max_pool" => check_all(&[x], c, r, |t, v| t.global_max_pool(v[0])),
                    "channel_mean" => check_all(&[x], h * w, r, |t, v| t.channel_mean(v[0])),
                    _ => check_all(&[x], h * w, r, |t, v| t.channel_max(v[0])),
                }
            }
            "scale_channels" | "scale_spatial" | "scale_by" => {
                let (c, h, w) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
                let x = rand_tensor(r, &[c, h, w], -1.0, 1.0);
                let n_out = c * h * w;
                match name {
                    "scale_channels" => {
                        let g = rand_tensor(r, &[c], -1.0, 1.0);
                        check_all(&[x, g], n_out, r, |t, v| t.scale_channels(v[0], v[1]))
                    }
                    "scale_spatial" => {
                        let g = rand_tensor(r, &[1, h, w], -1.0, 1.0);
                        check_all(&[x, g], n_out, r, |t, v| t.scale_spatial(v[0], v[1]))
                    }
                    _ => {
                        let s = rand_tensor(r, &[1], -1.0, 1.0);
                        check_all(&[x, s], n_out, r, |t, v| t.scale_by(v[0], v[1]))
                    }
                }
            }
            "concat" => {
                let tail = r.gen_range(1..4);
                let x = rand_tensor(r, &[2, tail], -1.0, 1.0);
                let y = rand_tensor(r, &[3, tail], -1.0, 1.0);
                // x appears twice: 2 + 3 + 2 rows out
                check_all(&[x, y], 7 * tail, r, |t, v| t.concat(&[v[0], v[1], v[0]]))
            }
            "select_rows" => check_all(&[a], 3 * shape[1], r, |t, v| {
                t.select_rows(v[0], &[1, 0, 1])
            }),
            "sum_rows" => check_all(&[a], shape[1], r, |t, v| t.sum_rows(v[0])),
            "tokens" => {
                let (tt, nn, d) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
                let p = rand_tensor(r, &[tt * nn, d], -1.0, 1.0);
                let c = rand_tensor(r, &[1, d], -1.0, 1.0);
                let s = rand_tensor(r, &[nn, d], -1.0, 1.0);
                let ti = rand_tensor(r, &[tt, d], -1.0, 1.0);
                check_all(&[p, c, s, ti], tt * (nn + 1) * d, r, |t, v| {
                    t.tokens(v[0], v[1], v[2], v[3])
                })
            }
            other => Err(crate::error::invalid!("unknown primitive {other}")),
        }
    }

    /// Worst error per primitive over `trials` seeded instances.
    pub fn run(seed: u64, trials: u64) -> Result<Vec<(&'static str, f64)>> {
        PRIMITIVES
            .iter()
            .map(|&name| {
                let mut worst = 0.0f64;
                for trial in 0..trials {
                    worst = worst.max(check_primitive(name, seed, trial)?);
                }
                Ok((name, worst))
            })
            .collect()
    }
}
