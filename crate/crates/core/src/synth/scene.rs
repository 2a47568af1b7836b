use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::error::{invalid, Result};
use crate::rng::seeded;
use crate::saliency::GroundTruthMask;
use crate::video::{chroma_dims, quantize, Frame, Plane, VideoSequence};

const GRAIN: f64 = 12.0;

/// A clean sequence with its per-frame object masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub video: VideoSequence,
    pub masks: Vec<GroundTruthMask>,
}

#[derive(Debug, Clone, Copy)]
struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

impl Wave {
    fn random(rng: &mut impl Rng, min_period: f64, max_period: f64, amp: f64) -> Self {
        let period = rng.gen_range(min_period..max_period);
        let angle = rng.gen_range(0.0..PI);
        let k = 2.0 * PI / period;
        Wave {
            kx: k * libm::cos(angle),
            ky: k * libm::sin(angle),
            phase: rng.gen_range(0.0..2.0 * PI),
            amp,
        }
    }

    fn at(&self, x: f64, y: f64) -> f64 {
        self.amp * libm::sin(self.kx * x + self.ky * y + self.phase)
    }
}

#[derive(Debug, Clone, Copy)]
struct Object {
    disk: bool,
    cx: f64,
    cy: f64,
    vx: f64,
    vy: f64,
    half: f64,
    luma: f64,
    cb: f64,
    cr: f64,
    stripes: Wave,
}

impl Object {
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.cx, y - self.cy);
        if self.disk {
            dx * dx + dy * dy <= self.half * self.half
        } else {
            dx.abs() <= self.half && dy.abs() <= self.half * 0.8
        }
    }

    fn advance(&mut self, w: f64, h: f64) {
        self.cx += self.vx;
        self.cy += self.vy;
        if self.cx < 0.0 || self.cx > w {
            self.vx = -self.vx;
            self.cx = self.cx.clamp(0.0, w);
        }
        if self.cy < 0.0 || self.cy > h {
            self.vy = -self.vy;
            self.cy = self.cy.clamp(0.0, h);
        }
    }
}

/// Panning textured background (with chroma texture) under one or two moving,
/// striped, flat-colored disks or rectangles.
pub fn render_scene(
    width: usize,
    height: usize,
    frames: usize,
    fps: u32,
    seed: u64,
) -> Result<Scene> {
    if width < 2 || height < 2 || width % 2 == 1 || height % 2 == 1 || frames == 0 {
        return Err(invalid!(
            "scene needs even dimensions and at least one frame, got {width}x{height}x{frames}"
        ));
    }
    let mut rng = seeded(seed);
    let (wf, hf) = (width as f64, height as f64);
    let side = wf.min(hf);

    let base = rng.gen_range(70.0..110.0);
    let (gx, gy) = (rng.gen_range(-40.0..40.0), rng.gen_range(-30.0..30.0));
    let luma_waves: Vec<Wave> = (0..3)
        .map(|i| {
            Wave::random(
                &mut rng,
                5.0 + 4.0 * i as f64,
                12.0 + 8.0 * i as f64,
                rng_amp(i),
            )
        })
        .collect();
    let cb_wave = Wave::random(&mut rng, 16.0, 40.0, 30.0);
    let cr_wave = Wave::random(&mut rng, 16.0, 40.0, 30.0);
    let pan_angle = rng.gen_range(0.0..2.0 * PI);
    let pan_speed = rng.gen_range(0.75..1.5);
    let (pan_x, pan_y) = (
        pan_speed * libm::cos(pan_angle),
        pan_speed * libm::sin(pan_angle),
    );

    let grain_seed: u64 = rng.gen();
    let n_obj = rng.gen_range(1..=2);
    let mut objects: Vec<Object> = (0..n_obj)
        .map(|_| Object {
            disk: rng.gen_bool(0.5),
            cx: rng.gen_range(0.25 * wf..0.75 * wf),
            cy: rng.gen_range(0.25 * hf..0.75 * hf),
            vx: rng.gen_range(-2.0..2.0),
            vy: rng.gen_range(-2.0..2.0),
            half: rng.gen_range(0.18 * side..0.32 * side),
            luma: rng.gen_range(150.0..210.0),
            cb: if rng.gen_bool(0.5) {
                rng.gen_range(50.0..90.0)
            } else {
                rng.gen_range(166.0..206.0)
            },
            cr: if rng.gen_bool(0.5) {
                rng.gen_range(50.0..90.0)
            } else {
                rng.gen_range(166.0..206.0)
            },
            stripes: Wave::random(&mut rng, 4.0, 10.0, 28.0),
        })
        .collect();

    let (cw, ch) = chroma_dims(width, height);
    let mut out_frames = Vec::with_capacity(frames);
    let mut masks = Vec::with_capacity(frames);
    for t in 0..frames {
        let (ox, oy) = (pan_x * t as f64, pan_y * t as f64);
        let owner = |x: f64, y: f64| objects.iter().rposition(|o| o.contains(x, y));
        let mut labels = Vec::with_capacity(width * height);
        let y_plane = Plane::from_fn(width, height, |r, c| {
            let (x, y) = (c as f64, r as f64);
            let hit = owner(x, y);
            labels.push(hit.is_some() as u8);
            let v = match hit {
                Some(i) => {
                    let o = &objects[i];
                    o.luma
                        + o.stripes.at(x - o.cx, y - o.cy)
                        + grain(grain_seed ^ i as u64, x - o.cx, y - o.cy, GRAIN)
                }
                None => {
                    let (u, v) = (x + ox, y + oy);
                    base + gx * x / wf
                        + gy * y / hf
                        + luma_waves.iter().map(|w| w.at(u, v)).sum::<f64>()
                        + grain(grain_seed, u, v, GRAIN)
                }
            };
            quantize(v)
        });
        let chroma = |wave: &Wave, pick: fn(&Object) -> f64| {
            Plane::from_fn(cw, ch, |r, c| {
                let (x, y) = (2.0 * c as f64 + 0.5, 2.0 * r as f64 + 0.5);
                match owner(x, y) {
                    Some(i) => quantize(pick(&objects[i])),
                    None => quantize(128.0 + wave.at(x + ox, y + oy)),
                }
            })
        };
        let cb = chroma(&cb_wave, |o| o.cb);
        let cr = chroma(&cr_wave, |o| o.cr);
        out_frames.push(Frame::new(y_plane, cb, cr)?);
        masks.push(GroundTruthMask::new(width, height, labels)?);
        objects.iter_mut().for_each(|o| o.advance(wf, hf));
    }
    Ok(Scene {
        video: VideoSequence::new(out_frames, fps, 1)?,
        masks,
    })
}

/// Static fine-grain texture in `[-amp, amp]` attached to integer coordinates.
fn grain(seed: u64, x: f64, y: f64, amp: f64) -> f64 {
    let (u, v) = (libm::round(x) as i64 as u64, libm::round(y) as i64 as u64);
    let h = crate::rng::mix(seed ^ u.wrapping_mul(0x9e37_79b9_7f4a_7c15), v);
    amp * ((h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
}

fn rng_amp(i: usize) -> f64 {
    [22.0, 16.0, 10.0][i]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_masked() {
        let a = render_scene(48, 32, 3, 25, 5).unwrap();
        let b = render_scene(48, 32, 3, 25, 5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, render_scene(48, 32, 3, 25, 6).unwrap());
        assert_eq!(a.video.len(), 3);
        assert_eq!(a.masks.len(), 3);
        for m in &a.masks {
            let on = m.labels().iter().filter(|&&l| l == 1).count();
            assert!(on > 0 && on < 48 * 32);
        }
    }

    #[test]
    fn odd_geometry_rejected() {
        assert!(render_scene(15, 16, 2, 25, 0).is_err());
        assert!(render_scene(16, 16, 0, 25, 0).is_err());
    }
}
