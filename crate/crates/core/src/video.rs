//! Planar 8-bit 4:2:0 video containers.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::tensor::Tensor;

/// One 8-bit sample grid in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Plane {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl Plane {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(invalid!("plane must be non-empty, got {width}x{height}"));
        }
        if samples.len() != width * height {
            return Err(shape_err!(
                "{width}x{height} plane needs {} samples, got {}",
                width * height,
                samples.len()
            ));
        }
        Ok(Plane {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Plane {
            width,
            height,
            samples: vec![value; width * height],
        }
    }

    /// Builds a plane by evaluating `f(row, col)`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut samples = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                samples.push(f(r, c));
            }
        }
        Plane {
            width,
            height,
            samples,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [u8] {
        &mut self.samples
    }

    pub fn get(&self, row: usize, col: usize) -> u8 {
        self.samples[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: u8) {
        self.samples[row * self.width + col] = v;
    }

    /// Samples widened to reals on the 0..=255 scale.
    pub fn to_f64(&self) -> Vec<f64> {
        self.samples.iter().map(|&s| s as f64).collect()
    }

    /// Rounds (half up) and clamps 0..=255-scale reals into a plane.
    pub fn from_f64(width: usize, height: usize, values: &[f64]) -> Result<Self> {
        if values.len() != width * height {
            return Err(shape_err!(
                "{width}x{height} plane from {} values",
                values.len()
            ));
        }
        Ok(Plane {
            width,
            height,
            samples: values.iter().map(|&v| quantize(v)).collect(),
        })
    }

    /// Each sample divided by 255, as a `[1,H,W]` tensor.
    pub fn unit(&self) -> Tensor {
        let data = self.samples.iter().map(|&s| s as f64 / 255.0).collect();
        Tensor::from_parts(vec![1, self.height, self.width], data)
    }
}

/// Round half up and clamp to the 8-bit range.
pub fn quantize(v: f64) -> u8 {
    libm::floor(v + 0.5).clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Frame {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

pub fn chroma_dims(width: usize, height: usize) -> (usize, usize) {
    (width.div_ceil(2), height.div_ceil(2))
}

impl Frame {
    pub fn new(y: Plane, cb: Plane, cr: Plane) -> Result<Self> {
        let (cw, ch) = chroma_dims(y.width, y.height);
        for p in [&cb, &cr] {
            if p.width != cw || p.height != ch {
                return Err(shape_err!(
                    "chroma plane {}x{} for luma {}x{} (want {cw}x{ch})",
                    p.width,
                    p.height,
                    y.width,
                    y.height
                ));
            }
        }
        Ok(Frame { y, cb, cr })
    }

    /// Mid-gray chroma around the given luma plane.
    pub fn from_luma(y: Plane) -> Self {
        let (cw, ch) = chroma_dims(y.width, y.height);
        Frame {
            cb: Plane::filled(cw, ch, 128),
            cr: Plane::filled(cw, ch, 128),
            y,
        }
    }

    pub fn width(&self) -> usize {
        self.y.width
    }

    pub fn height(&self) -> usize {
        self.y.height
    }

    /// Payload size in bytes (Y then Cb then Cr).
    pub fn byte_len(&self) -> usize {
        self.y.samples.len() + self.cb.samples.len() + self.cr.samples.len()
    }
}

/// Luma of a frame on the unit interval, `[1,H,W]`.
pub fn luma_unit(frame: &Frame) -> Tensor {
    frame.y.unit()
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VideoSequence {
    frames: Vec<Frame>,
    fps_num: u32,
    fps_den: u32,
}

impl VideoSequence {
    pub fn new(frames: Vec<Frame>, fps_num: u32, fps_den: u32) -> Result<Self> {
        let first = frames.first().ok_or(Error::Empty("video sequence"))?;
        if fps_num == 0 || fps_den == 0 {
            return Err(invalid!("frame rate {fps_num}/{fps_den} must be positive"));
        }
        let (w, h) = (first.width(), first.height());
        if let Some(bad) = frames
            .iter()
            .position(|f| f.width() != w || f.height() != h)
        {
            return Err(shape_err!("frame {bad} geometry differs from {w}x{h}"));
        }
        Ok(VideoSequence {
            frames,
            fps_num,
            fps_den,
        })
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn frames_mut(&mut self) -> &mut [Frame] {
        &mut self.frames
    }

    pub fn into_frames(self) -> Vec<Frame> {
        self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width()
    }

    pub fn height(&self) -> usize {
        self.frames[0].height()
    }

    pub fn fps(&self) -> (u32, u32) {
        (self.fps_num, self.fps_den)
    }

    /// Same frame rate, new frames (geometry re-validated).
    pub fn with_frames(&self, frames: Vec<Frame>) -> Result<Self> {
        Self::new(frames, self.fps_num, self.fps_den)
    }
}

/// Y, Cb and Cr on the unit interval as `[3,H,W]`, chroma upsampled by sample repetition.
pub fn yuv_unit(frame: &Frame) -> Tensor {
    let (w, h) = (frame.width(), frame.height());
    let mut data = Vec::with_capacity(3 * w * h);
    data.extend(frame.y.samples.iter().map(|&s| s as f64 / 255.0));
    for p in [&frame.cb, &frame.cr] {
        for r in 0..h {
            for c in 0..w {
                data.push(p.get(r / 2, c / 2) as f64 / 255.0);
            }
        }
    }
    Tensor::from_parts(vec![3, h, w], data)
}

/// `side × side` window of a `[C,H,W]` tensor at `(row, col)`.
pub fn crop(t: &Tensor, row: usize, col: usize, side: usize) -> Result<Tensor> {
    let [c, h, w] = t.shape() else {
        return Err(shape_err!("crop needs [C,H,W], got {:?}", t.shape()));
    };
    let (c, h, w) = (*c, *h, *w);
    if side == 0 || row + side > h || col + side > w {
        return Err(invalid!(
            "{side}x{side} window at ({row},{col}) outside {h}x{w}"
        ));
    }
    let mut data = Vec::with_capacity(c * side * side);
    for ch in 0..c {
        for r in row..row + side {
            let start = (ch * h + r) * w + col;
            data.extend_from_slice(&t.data()[start..start + side]);
        }
    }
    Ok(Tensor::from_parts(vec![c, side, side], data))
}

/// Bilinear resize of a `[1,H,W]` unit grid to `side × side`; identity when already that size.
pub fn resize_square(grid: &Tensor, side: usize) -> Result<Tensor> {
    if grid.shape()[1] == side && grid.shape()[2] == side {
        return Ok(grid.clone());
    }
    crate::layers::resize_bilinear(grid, side, side)
}
