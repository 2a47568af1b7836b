//! Correlation metrics, full-reference baselines and the count-weighted overall score.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::video::Plane;

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(shape_err!(
            "series lengths {} and {} differ",
            x.len(),
            y.len()
        ));
    }
    if x.len() < 2 {
        return Err(invalid!(
            "correlation needs at least 2 pairs, got {}",
            x.len()
        ));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation input"));
    }
    Ok(())
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Pearson product-moment correlation.
pub fn plcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (mx, my) = (mean(x), mean(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("zero-variance series"));
    }
    Ok((sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation: PLCC of average ranks.
pub fn srcc(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    plcc(&average_ranks(x), &average_ranks(y))
}

/// Peak signal-to-noise ratio in dB at peak 255; `f64::INFINITY` for identical planes.
pub fn psnr(reference: &Plane, test: &Plane) -> Result<f64> {
    same_geometry(reference, test)?;
    let n = reference.samples().len() as f64;
    let sse: f64 = reference
        .samples()
        .iter()
        .zip(test.samples())
        .map(|(&a, &b)| {
            let d = a as f64 - b as f64;
            d * d
        })
        .sum();
    if sse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * libm::log10(255.0 * 255.0 / (sse / n)))
}

fn same_geometry(a: &Plane, b: &Plane) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(shape_err!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        ));
    }
    Ok(())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;

fn gaussian_window() -> Vec<f64> {
    let half = (SSIM_WINDOW / 2) as f64;
    let g: Vec<f64> = (0..SSIM_WINDOW)
        .map(|i| {
            let d = i as f64 - half;
            libm::exp(-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA))
        })
        .collect();
    let s: f64 = g.iter().sum();
    g.into_iter().map(|v| v / s).collect()
}

/// Separable filtering with the normalized Gaussian, keeping only fully covered positions.
fn filter_valid(src: &[f64], w: usize, h: usize, k: &[f64]) -> Vec<f64> {
    let n = k.len();
    let (ow, oh) = (w - n + 1, h - n + 1);
    let mut rows = vec![0.0; ow * h];
    for r in 0..h {
        for c in 0..ow {
            rows[r * ow + c] = (0..n).map(|i| k[i] * src[r * w + c + i]).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = (0..n).map(|i| k[i] * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Windowed SSIM (11×11 Gaussian, σ = 1.5, K1 = 0.01, K2 = 0.03, L = 255), averaged over windows.
pub fn ssim_index(reference: &Plane, test: &Plane) -> Result<f64> {
    same_geometry(reference, test)?;
    let (w, h) = (reference.width(), reference.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(invalid!(
            "SSIM needs both sides ≥ {SSIM_WINDOW}, got {w}x{h}"
        ));
    }
    let c1 = (0.01 * 255.0) * (0.01 * 255.0);
    let c2 = (0.03 * 255.0) * (0.03 * 255.0);
    let a = reference.to_f64();
    let b = test.to_f64();
    let k = gaussian_window();
    let prod = |p: &[f64], q: &[f64]| p.iter().zip(q).map(|(x, y)| x * y).collect::<Vec<f64>>();
    let mu_a = filter_valid(&a, w, h, &k);
    let mu_b = filter_valid(&b, w, h, &k);
    let e_aa = filter_valid(&prod(&a, &a), w, h, &k);
    let e_bb = filter_valid(&prod(&b, &b), w, h, &k);
    let e_ab = filter_valid(&prod(&a, &b), w, h, &k);
    let mut total = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let va = e_aa[i] - ma * ma;
        let vb = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        total +=
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / mu_a.len() as f64)
}

/// `Σ value·count / Σ count`; entries whose value is `None` drop out of both sums.
pub fn weighted_overall(values: &[Option<f64>], counts: &[usize]) -> Result<f64> {
    if values.len() != counts.len() {
        return Err(shape_err!(
            "{} values for {} counts",
            values.len(),
            counts.len()
        ));
    }
    let (mut num, mut den) = (0.0, 0usize);
    for (v, &c) in values.iter().zip(counts) {
        if c == 0 {
            return Err(invalid!("database counts must be positive"));
        }
        if let Some(v) = v {
            num += v * c as f64;
            den += c;
        }
    }
    if den == 0 {
        return Err(Error::Empty("overall: no database values"));
    }
    Ok(num / den as f64)
}

/// Four-parameter logistic `b2 + (b1 − b2) / (1 + exp(−(x − b3)/b4))`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Logistic {
    pub b: [f64; 4],
}

impl Logistic {
    pub fn eval(&self, x: f64) -> f64 {
        let [b1, b2, b3, b4] = self.b;
        b2 + (b1 - b2) / (1.0 + libm::exp(-(x - b3) / b4))
    }

    fn jacobian(&self, x: f64) -> [f64; 4] {
        let [b1, b2, b3, b4] = self.b;
        let e = libm::exp(-(x - b3) / b4);
        let s = 1.0 / (1.0 + e);
        let ds = s * s * e;
        [
            s,
            1.0 - s,
            -(b1 - b2) * ds / b4,
            -(b1 - b2) * ds * (x - b3) / (b4 * b4),
        ]
    }

    fn sse(&self, x: &[f64], y: &[f64]) -> f64 {
        x.iter()
            .zip(y)
            .map(|(&a, &b)| (self.eval(a) - b) * (self.eval(a) - b))
            .sum()
    }
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let piv = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..4 {
            let f = a[r][col] / a[col][col];
            for c in col..4 {
                a[r][c] -= f * a[col][c];
            }
            b[r] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for r in (0..4).rev() {
        let s: f64 = (r + 1..4).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Levenberg-Marquardt fit of a [`Logistic`] mapping predictions `x` onto scores `y`.
pub fn fit_logistic(x: &[f64], y: &[f64]) -> Result<Logistic> {
    check_pair(x, y)?;
    let (lo, hi) = y
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| {
            (l.min(v), h.max(v))
        });
    let sd = {
        let m = mean(x);
        libm::sqrt(x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / x.len() as f64)
    };
    if sd == 0.0 {
        return Err(Error::Degenerate("constant predictions"));
    }
    let slope = if plcc(x, y).unwrap_or(1.0) < 0.0 {
        -sd
    } else {
        sd
    };
    let mut model = Logistic {
        b: [hi, lo, mean(x), slope],
    };
    let mut lambda = 1e-3;
    let mut err = model.sse(x, y);
    for _ in 0..200 {
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (&a, &b) in x.iter().zip(y) {
            let j = model.jacobian(a);
            let r = b - model.eval(a);
            for p in 0..4 {
                jtr[p] += j[p] * r;
                for q in 0..4 {
                    jtj[p][q] += j[p] * j[q];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut damped = jtj;
            for (p, row) in damped.iter_mut().enumerate() {
                row[p] += lambda * (jtj[p][p] + 1e-12);
            }
            let Some(step) = solve4(damped, jtr) else {
                lambda *= 10.0;
                continue;
            };
            let mut cand = model;
            for p in 0..4 {
                cand.b[p] += step[p];
            }
            let e = cand.sse(x, y);
            if e.is_finite() && e < err && cand.b[3] != 0.0 {
                let done = err - e <= 1e-12 * err.max(1e-300);
                model = cand;
                err = e;
                lambda = (lambda / 10.0).max(1e-12);
                improved = !done;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plcc_examples() {
        assert!((plcc(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((plcc(&[1.0, 2.0, 3.0], &[-1.0, -2.0, -3.0]).unwrap() + 1.0).abs() < 1e-15);
        assert!((plcc(&[1.0, 2.0, 3.0], &[6.0, 4.0, 5.0]).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(
            plcc(&[1.0, 1.0], &[1.0, 2.0]),
            Err(Error::Degenerate("zero-variance series"))
        );
        assert!(plcc(&[1.0], &[1.0]).is_err());
        assert!(plcc(&[1.0, 2.0], &[1.0]).is_err());
    }

    #[test]
    fn srcc_examples() {
        assert!((srcc(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 0.5).abs() < 1e-15);
        assert_eq!(
            srcc(&[1.0, 2.0, 3.0, 4.0], &[1.0, 8.0, 27.0, 64.0]).unwrap(),
            1.0
        );
        assert_eq!(average_ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 3.0]),
            vec![3.0, 1.0, 3.0, 3.0]
        );
        assert!(srcc(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = Plane::filled(8, 8, 100);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        assert!((psnr(&a, &Plane::filled(8, 8, 102)).unwrap() - 42.1102).abs() < 1e-4);
        let b = Plane::from_fn(8, 8, |r, c| 100 + ((r + c) % 2) as u8);
        let c = Plane::from_fn(8, 8, |r, c| 100 + ((r + c + 1) % 2) as u8);
        assert!((psnr(&b, &c).unwrap() - 48.1308).abs() < 1e-4);
        assert!(psnr(&a, &Plane::filled(4, 8, 0)).is_err());
    }

    #[test]
    fn ssim_examples() {
        let a = Plane::from_fn(24, 20, |r, c| ((r * 37 + c * 11) % 256) as u8);
        assert!((ssim_index(&a, &a).unwrap() - 1.0).abs() < 1e-12);
        let inv = Plane::from_fn(24, 20, |r, c| 255 - a.get(r, c));
        assert!(ssim_index(&a, &inv).unwrap() < 0.3);
        let b = Plane::from_fn(24, 20, |r, c| {
            a.get(r, c).saturating_add(((r * c) % 7) as u8)
        });
        assert!((ssim_index(&a, &b).unwrap() - ssim_index(&b, &a).unwrap()).abs() < 1e-12);
        assert!(ssim_index(&Plane::filled(10, 20, 0), &Plane::filled(10, 20, 0)).is_err());
    }

    #[test]
    fn overall_examples() {
        let counts = [40, 36, 40, 30];
        let psnr_row = [Some(0.5735), Some(0.8220), Some(0.7998), Some(0.7756)];
        assert!((weighted_overall(&psnr_row, &counts).unwrap() - 0.7383).abs() < 5e-5);
        let tlvqm = [Some(0.7511), Some(0.7740), None, None];
        assert!((weighted_overall(&tlvqm, &counts).unwrap() - 0.7619).abs() < 5e-5);
        assert!(weighted_overall(&[None, None], &[1, 2]).is_err());
        assert!(weighted_overall(&[Some(1.0)], &[0]).is_err());
    }

    #[test]
    fn logistic_recovers_a_known_curve() {
        let truth = Logistic {
            b: [80.0, 20.0, 0.5, 0.1],
        };
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| truth.eval(v)).collect();
        let fit = fit_logistic(&x, &y).unwrap();
        for &v in &x {
            assert!((fit.eval(v) - truth.eval(v)).abs() < 1e-4);
        }
    }
}
