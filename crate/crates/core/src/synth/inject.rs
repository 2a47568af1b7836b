use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use crate::error::{invalid, Result};
use crate::video::{Frame, Plane, VideoSequence};

use super::{check_strength, Region};

fn map_frames(
    seq: &VideoSequence,
    f: impl Fn(usize, &Frame) -> Result<Frame>,
) -> Result<VideoSequence> {
    let frames = seq
        .frames()
        .iter()
        .enumerate()
        .map(|(t, fr)| f(t, fr))
        .collect::<Result<Vec<_>>>()?;
    seq.with_frames(frames)
}

fn map_luma(
    seq: &VideoSequence,
    f: impl Fn(usize, &Plane) -> Result<Plane>,
) -> Result<VideoSequence> {
    map_frames(seq, |t, fr| {
        Frame::new(f(t, &fr.y)?, fr.cb.clone(), fr.cr.clone())
    })
}

/// Mixes each 8×8 block (partial blocks at the borders included) toward its mean.
pub fn inject_blocking(seq: &VideoSequence, strength: f64) -> Result<VideoSequence> {
    check_strength(strength)?;
    if strength == 0.0 {
        return Ok(seq.clone());
    }
    map_luma(seq, |_, p| Ok(blocking_plane(p, strength)))
}

fn blocking_plane(p: &Plane, s: f64) -> Plane {
    const B: usize = 8;
    let (w, h) = (p.width(), p.height());
    let src = p.to_f64();
    let mut out = src.clone();
    for by in (0..h).step_by(B) {
        for bx in (0..w).step_by(B) {
            let (ye, xe) = ((by + B).min(h), (bx + B).min(w));
            let mut sum = 0.0;
            for r in by..ye {
                sum += src[r * w + bx..r * w + xe].iter().sum::<f64>();
            }
            let mean = sum / ((ye - by) * (xe - bx)) as f64;
            for r in by..ye {
                for c in bx..xe {
                    out[r * w + c] = (1.0 - s) * src[r * w + c] + s * mean;
                }
            }
        }
    }
    Plane::from_f64(w, h, &out).expect("geometry preserved")
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = libm::ceil(3.0 * sigma) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let x = i as f64 - radius as f64;
            libm::exp(-x * x / (2.0 * sigma * sigma))
        })
        .collect();
    let total: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= total);
    k
}

/// Separable Gaussian with edge clamping, on 0..=255-scale values.
pub(crate) fn gaussian_blur(values: &[f64], w: usize, h: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return values.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * values[y * w + clamp(x as isize + i as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[clamp(y as isize + i as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

fn blur_plane(p: &Plane, sigma: f64) -> Plane {
    let out = gaussian_blur(&p.to_f64(), p.width(), p.height(), sigma);
    Plane::from_f64(p.width(), p.height(), &out).expect("geometry preserved")
}

/// Gaussian blur of luma with `σ = 3·strength`.
pub fn inject_blur(seq: &VideoSequence, strength: f64) -> Result<VideoSequence> {
    check_strength(strength)?;
    if strength == 0.0 {
        return Ok(seq.clone());
    }
    map_luma(seq, |_, p| Ok(blur_plane(p, 3.0 * strength)))
}

/// Orthonormal projection onto the lowest `keep` DCT-II basis vectors of length `n`.
fn dct_projection(n: usize, keep: usize) -> Vec<f64> {
    let basis: Vec<Vec<f64>> = (0..keep)
        .map(|k| {
            let a = if k == 0 {
                libm::sqrt(1.0 / n as f64)
            } else {
                libm::sqrt(2.0 / n as f64)
            };
            (0..n)
                .map(|i| a * libm::cos(PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64))
                .collect()
        })
        .collect();
    let mut proj = vec![0.0; n * n];
    for b in &basis {
        for i in 0..n {
            for j in 0..n {
                proj[i * n + j] += b[i] * b[j];
            }
        }
    }
    proj
}

fn kept(n: usize, cutoff: f64) -> usize {
    // count of k with k < cutoff·n
    (libm::ceil(cutoff * n as f64) as usize).clamp(1, n)
}

fn ringing_plane(p: &Plane, s: f64) -> Plane {
    let (w, h) = (p.width(), p.height());
    let cutoff = 1.0 - 0.6 * s;
    let pw = dct_projection(w, kept(w, cutoff));
    let ph = dct_projection(h, kept(h, cutoff));
    let src = p.to_f64();
    let mut rows = vec![0.0; w * h];
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            rows[y * w + x] = (0..w).map(|j| pw[x * w + j] * row[j]).sum();
        }
    }
    let mut out = vec![0.0; w * h];
    for x in 0..w {
        for y in 0..h {
            let low: f64 = (0..h).map(|i| ph[y * h + i] * rows[i * w + x]).sum();
            out[y * w + x] = (1.0 - s) * src[y * w + x] + s * low;
        }
    }
    Plane::from_f64(w, h, &out).expect("geometry preserved")
}

/// Ideal DCT-domain low-pass of luma (cutoff fraction `1 − 0.6·strength`), mixed back by `strength`.
pub fn inject_ringing(seq: &VideoSequence, strength: f64) -> Result<VideoSequence> {
    check_strength(strength)?;
    if strength == 0.0 {
        return Ok(seq.clone());
    }
    map_luma(seq, |_, p| Ok(ringing_plane(p, strength)))
}

fn bleed_plane(p: &Plane, s: f64) -> Plane {
    let (w, h) = (p.width(), p.height());
    let blurred = gaussian_blur(&p.to_f64(), w, h, 4.0 * s);
    let d = libm::ceil(2.0 * s) as usize;
    let shifted: Vec<f64> = (0..h)
        .flat_map(|r| {
            let sr = r.saturating_sub(d);
            let row = &blurred[sr * w..(sr + 1) * w];
            (0..w).map(move |c| row[c.saturating_sub(d)])
        })
        .collect();
    Plane::from_f64(w, h, &shifted).expect("geometry preserved")
}

/// Chroma blurred with `σ = 4·strength` then shifted right and down by `⌈2·strength⌉` samples.
pub fn inject_color_bleeding(seq: &VideoSequence, strength: f64) -> Result<VideoSequence> {
    check_strength(strength)?;
    if strength == 0.0 {
        return Ok(seq.clone());
    }
    map_frames(seq, |_, f| {
        Frame::new(
            f.y.clone(),
            bleed_plane(&f.cb, strength),
            bleed_plane(&f.cr, strength),
        )
    })
}

/// Frame `t` luma scaled by `1 + 0.3·strength·sin(2πt/period)`.
pub fn inject_flicker(seq: &VideoSequence, strength: f64, period: usize) -> Result<VideoSequence> {
    check_strength(strength)?;
    if period < 2 {
        return Err(invalid!(
            "flicker period must be at least 2 frames, got {period}"
        ));
    }
    if strength == 0.0 {
        return Ok(seq.clone());
    }
    map_luma(seq, |t, p| {
        let gain = 1.0 + 0.3 * strength * libm::sin(2.0 * PI * t as f64 / period as f64);
        let v: Vec<f64> = p.samples().iter().map(|&x| x as f64 * gain).collect();
        Plane::from_f64(p.width(), p.height(), &v)
    })
}

/// Horizontal drift of the floating region at frame `t`.
pub fn floating_offset(strength: f64, t: usize, period: usize) -> isize {
    let amplitude = libm::ceil(4.0 * strength);
    libm::round(amplitude * libm::sin(2.0 * PI * t as f64 / period as f64)) as isize
}

/// Inside `region`, luma is the first frame translated by a sinusoidal horizontal drift of
/// amplitude `⌈4·strength⌉` pixels; outside it the sequence is untouched.
pub fn inject_floating(
    seq: &VideoSequence,
    strength: f64,
    region: Region,
    period: usize,
) -> Result<VideoSequence> {
    check_strength(strength)?;
    if period < 2 {
        return Err(invalid!(
            "floating period must be at least 2 frames, got {period}"
        ));
    }
    if !region.fits(seq.width(), seq.height()) {
        return Err(invalid!(
            "region {:?} outside {}x{}",
            region,
            seq.width(),
            seq.height()
        ));
    }
    if strength == 0.0 || region.is_empty() {
        return Ok(seq.clone());
    }
    let anchor = seq.frames()[0].y.clone();
    let w = anchor.width() as isize;
    map_luma(seq, |t, p| {
        let dx = floating_offset(strength, t, period);
        let mut out = p.clone();
        for r in region.row..region.row + region.height {
            for c in region.col..region.col + region.width {
                let sc = (c as isize - dx).clamp(0, w - 1) as usize;
                out.set(r, c, anchor.get(r, sc));
            }
        }
        Ok(out)
    })
}

/// Mean |difference| across 8-aligned column boundaries minus that across all other adjacent columns.
pub fn blockiness(p: &Plane) -> f64 {
    let (w, h) = (p.width(), p.height());
    let (mut aligned, mut na, mut other, mut no) = (0.0, 0usize, 0.0, 0usize);
    for r in 0..h {
        for c in 1..w {
            let d = (p.get(r, c) as f64 - p.get(r, c - 1) as f64).abs();
            if c % 8 == 0 {
                aligned += d;
                na += 1;
            } else {
                other += d;
                no += 1;
            }
        }
    }
    aligned / na.max(1) as f64 - other / no.max(1) as f64
}

/// Mean squared first difference over both axes.
pub fn gradient_energy(p: &Plane) -> f64 {
    let (w, h) = (p.width(), p.height());
    let (mut sum, mut n) = (0.0, 0usize);
    for r in 0..h {
        for c in 0..w {
            if c + 1 < w {
                let d = p.get(r, c + 1) as f64 - p.get(r, c) as f64;
                sum += d * d;
                n += 1;
            }
            if r + 1 < h {
                let d = p.get(r + 1, c) as f64 - p.get(r, c) as f64;
                sum += d * d;
                n += 1;
            }
        }
    }
    sum / n.max(1) as f64
}
