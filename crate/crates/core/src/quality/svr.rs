use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};

/// Hyperparameters of the RBF ε-SVR.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub gamma: f64,
    /// Stop once the maximal violating pair gap falls to this value.
    pub tolerance: f64,
    /// Cap on working-pair updates.
    pub max_iterations: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        SvrParams {
            c: 10.0,
            epsilon: 0.1,
            gamma: 1.0 / 6.0,
            tolerance: 1e-3,
            max_iterations: 100_000,
        }
    }
}

impl SvrParams {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if !ok(self.c)
            || !ok(self.gamma)
            || !ok(self.tolerance)
            || !(self.epsilon >= 0.0 && self.epsilon.is_finite())
        {
            return Err(invalid!("bad SVR parameters {self:?}"));
        }
        if self.max_iterations == 0 {
            return Err(invalid!("SVR iteration cap must be positive"));
        }
        Ok(())
    }
}

/// Per-dimension `(x − mean) / scale`; zero-variance dimensions keep mean 0 and scale 1.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(xs: &[Vec<f64>]) -> Self {
        let d = xs[0].len();
        let n = xs.len() as f64;
        let mut mean = vec![0.0; d];
        let mut scale = vec![1.0; d];
        for k in 0..d {
            let m = xs.iter().map(|x| x[k]).sum::<f64>() / n;
            let var = xs.iter().map(|x| (x[k] - m) * (x[k] - m)).sum::<f64>() / n;
            let sd = libm::sqrt(var);
            if sd > 1e-12 * m.abs().max(1.0) {
                mean[k] = m;
                scale[k] = sd;
            }
        }
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mean)
            .zip(&self.scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvrModel {
    pub params: SvrParams,
    pub standardizer: Standardizer,
    /// Standardized training inputs in training order.
    pub support: Vec<Vec<f64>>,
    /// `α − α*` per training input; zero for points strictly inside the tube.
    pub coef: Vec<f64>,
    pub bias: f64,
    /// Maximal violating pair gap when the solver stopped.
    pub kkt_gap: f64,
    pub iterations: usize,
    /// The iteration cap stopped the solver before the tolerance was met.
    pub capped: bool,
    /// Inputs were all identical; the model predicts the mean score.
    pub degenerate: bool,
}

fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    libm::exp(-gamma * d2)
}

impl SvrModel {
    pub fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.standardizer.apply(x);
        let mut f = self.bias;
        for (c, s) in self.coef.iter().zip(&self.support) {
            if *c != 0.0 {
                f += c * rbf(self.params.gamma, s, &z);
            }
        }
        f
    }

    /// Largest ε-insensitive KKT violation of the coefficients on the training set
    /// (`xs`, `ys` in training order).
    pub fn kkt_residual(&self, xs: &[Vec<f64>], ys: &[f64]) -> f64 {
        let (c, eps) = (self.params.c, self.params.epsilon);
        let bound = 1e-12 * c;
        let mut worst: f64 = 0.0;
        for ((x, &y), &a) in xs.iter().zip(ys).zip(&self.coef) {
            let e = y - self.predict(x);
            let v = if a.abs() <= bound {
                (e.abs() - eps).max(0.0)
            } else if a >= c - bound {
                (eps - e).max(0.0)
            } else if a <= -c + bound {
                (e + eps).max(0.0)
            } else if a > 0.0 {
                (e - eps).abs()
            } else {
                (e + eps).abs()
            };
            worst = worst.max(v);
        }
        worst
    }
}

const TAU: f64 = 1e-12;

/// Dual solver over `β ∈ [0,C]^{2n}`: entries `0..n` are `α` (sign +1), `n..2n` are `α*` (sign −1).
struct Smo<'a> {
    k: &'a [f64],
    n: usize,
    c: f64,
    beta: Vec<f64>,
    grad: Vec<f64>,
}

impl Smo<'_> {
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    fn q(&self, a: usize, b: usize) -> f64 {
        self.sign(a) * self.sign(b) * self.k[(a % self.n) * self.n + b % self.n]
    }

    /// Second-order working-set selection; `None` once the gap is within `tol`.
    fn select(&self, tol: f64) -> (Option<(usize, usize)>, f64) {
        let m = 2 * self.n;
        let (mut gmax, mut i) = (f64::NEG_INFINITY, usize::MAX);
        for t in 0..m {
            let v = if self.sign(t) > 0.0 {
                (self.beta[t] < self.c).then(|| -self.grad[t])
            } else {
                (self.beta[t] > 0.0).then_some(self.grad[t])
            };
            if let Some(v) = v {
                if v >= gmax {
                    gmax = v;
                    i = t;
                }
            }
        }
        if i == usize::MAX {
            return (None, 0.0);
        }
        let (mut gmax2, mut j, mut best) = (f64::NEG_INFINITY, usize::MAX, f64::INFINITY);
        let qii = self.q(i, i);
        for t in 0..m {
            let (eligible, g2, diff, quad) = if self.sign(t) > 0.0 {
                let d = gmax + self.grad[t];
                (
                    self.beta[t] > 0.0,
                    self.grad[t],
                    d,
                    qii + self.q(t, t) - 2.0 * self.sign(i) * self.q(i, t),
                )
            } else {
                let d = gmax - self.grad[t];
                (
                    self.beta[t] < self.c,
                    -self.grad[t],
                    d,
                    qii + self.q(t, t) + 2.0 * self.sign(i) * self.q(i, t),
                )
            };
            if !eligible {
                continue;
            }
            gmax2 = gmax2.max(g2);
            if diff > 0.0 {
                let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                if obj <= best {
                    best = obj;
                    j = t;
                }
            }
        }
        let gap = gmax + gmax2;
        if gap < tol || j == usize::MAX {
            return (None, gap.max(0.0));
        }
        (Some((i, j)), gap)
    }

    fn update(&mut self, i: usize, j: usize) {
        let c = self.c;
        let (old_i, old_j) = (self.beta[i], self.beta[j]);
        let qij = self.q(i, j);
        let (mut bi, mut bj) = (old_i, old_j);
        if self.sign(i) != self.sign(j) {
            let quad = (self.q(i, i) + self.q(j, j) + 2.0 * qij).max(TAU);
            let delta = (-self.grad[i] - self.grad[j]) / quad;
            let diff = bi - bj;
            bi += delta;
            bj += delta;
            if diff > 0.0 {
                if bj < 0.0 {
                    bj = 0.0;
                    bi = diff;
                }
            } else if bi < 0.0 {
                bi = 0.0;
                bj = -diff;
            }
            if diff > 0.0 {
                if bi > c {
                    bi = c;
                    bj = c - diff;
                }
            } else if bj > c {
                bj = c;
                bi = c + diff;
            }
        } else {
            let quad = (self.q(i, i) + self.q(j, j) - 2.0 * qij).max(TAU);
            let delta = (self.grad[i] - self.grad[j]) / quad;
            let sum = bi + bj;
            bi -= delta;
            bj += delta;
            if sum > c {
                if bi > c {
                    bi = c;
                    bj = sum - c;
                }
            } else if bj < 0.0 {
                bj = 0.0;
                bi = sum;
            }
            if sum > c {
                if bj > c {
                    bj = c;
                    bi = sum - c;
                }
            } else if bi < 0.0 {
                bi = 0.0;
                bj = sum;
            }
        }
        self.beta[i] = bi;
        self.beta[j] = bj;
        let (di, dj) = (bi - old_i, bj - old_j);
        for t in 0..2 * self.n {
            self.grad[t] += self.q(i, t) * di + self.q(j, t) * dj;
        }
    }

    /// Offset `ρ` so that predictions are `Σ(α−α*)K − ρ`.
    fn rho(&self) -> f64 {
        let (mut ub, mut lb, mut sum, mut free) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
        for t in 0..2 * self.n {
            let yg = self.sign(t) * self.grad[t];
            let up = self.sign(t) > 0.0;
            if self.beta[t] >= self.c {
                if up {
                    lb = lb.max(yg);
                } else {
                    ub = ub.min(yg);
                }
            } else if self.beta[t] <= 0.0 {
                if up {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum += yg;
            }
        }
        if free > 0 {
            sum / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

/// Fits an RBF ε-SVR on standardized inputs by pairwise (SMO) coordinate optimization.
pub fn train_svr(xs: &[Vec<f64>], ys: &[f64], params: SvrParams) -> Result<SvrModel> {
    params.validate()?;
    if xs.len() != ys.len() {
        return Err(shape_err!("{} inputs for {} targets", xs.len(), ys.len()));
    }
    if xs.len() < 2 {
        return Err(invalid!("SVR needs at least 2 records, got {}", xs.len()));
    }
    let d = xs[0].len();
    if d == 0 || xs.iter().any(|x| x.len() != d) {
        return Err(shape_err!("SVR inputs must share one nonzero dimension"));
    }
    if xs.iter().flatten().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("SVR training data"));
    }
    let standardizer = Standardizer::fit(xs);
    let zs: Vec<Vec<f64>> = xs.iter().map(|x| standardizer.apply(x)).collect();
    let n = zs.len();

    if zs.iter().all(|z| *z == zs[0]) {
        let mean = ys.iter().sum::<f64>() / n as f64;
        let spread = ys.iter().any(|&y| y != ys[0]);
        return Ok(SvrModel {
            params,
            standardizer,
            coef: vec![0.0; n],
            support: zs,
            bias: mean,
            kkt_gap: 0.0,
            iterations: 0,
            capped: false,
            degenerate: spread,
        });
    }

    let mut k = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let v = rbf(params.gamma, &zs[a], &zs[b]);
            k[a * n + b] = v;
            k[b * n + a] = v;
        }
    }
    let mut grad = vec![0.0; 2 * n];
    for t in 0..n {
        grad[t] = params.epsilon - ys[t];
        grad[t + n] = params.epsilon + ys[t];
    }
    let mut smo = Smo {
        k: &k,
        n,
        c: params.c,
        beta: vec![0.0; 2 * n],
        grad,
    };
    let mut iterations = 0;
    let gap = loop {
        let (pair, gap) = smo.select(params.tolerance);
        match pair {
            None => break gap,
            Some(_) if iterations >= params.max_iterations => break gap,
            Some((i, j)) => smo.update(i, j),
        }
        iterations += 1;
    };
    let capped = gap >= params.tolerance;
    let bias = -smo.rho();
    let coef = (0..n).map(|t| smo.beta[t] - smo.beta[t + n]).collect();
    Ok(SvrModel {
        params,
        standardizer,
        support: zs,
        coef,
        bias,
        kkt_gap: gap,
        iterations,
        capped,
        degenerate: false,
    })
}
