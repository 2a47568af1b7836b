//! Saliency detection: a small U-shaped network with channel/spatial
//! attention, pyramid pooling and global guidance, trained on a mixed
//! BCE + IoU + SSIM objective.

mod blocks;
mod loss;
mod net;
mod train;

use alloc::vec::Vec;

pub use blocks::{ggf_fuse, Cbam, Ggf, Ppm};
pub use loss::{
    bce_term, iou_ratio, iou_term, loss_bce, loss_iou, loss_ssim, loss_total, mixed_loss,
    ssim_term, BCE_EPS, SSIM_C1, SSIM_C2,
};
pub use net::{SaliencyNet, SaliencyNetConfig};
pub use train::{
    mean_loss, train, train_from, SaliencySample, SaliencyTrainOptions, TrainedSaliency,
};

use crate::error::{invalid, shape_err, Result};
use crate::tensor::Tensor;

/// Per-pixel saliency probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    width: usize,
    height: usize,
    probs: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(width: usize, height: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != width * height || probs.is_empty() {
            return Err(shape_err!(
                "{width}x{height} map from {} values",
                probs.len()
            ));
        }
        if probs.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(invalid!("saliency probabilities must lie in [0,1]"));
        }
        Ok(SaliencyMap {
            width,
            height,
            probs,
        })
    }

    /// `[1,H,W]` tensor view.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match t.shape() {
            [1, h, w] => Self::new(*w, *h, t.data().to_vec()),
            s => Err(shape_err!(
                "saliency map tensor must be [1,H,W], got {:?}",
                s
            )),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_parts(alloc::vec![1, self.height, self.width], self.probs.clone())
    }
}

/// Binary ground-truth labels (0 or 1 per pixel).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GroundTruthMask {
    width: usize,
    height: usize,
    labels: Vec<u8>,
}

impl GroundTruthMask {
    pub fn new(width: usize, height: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != width * height || labels.is_empty() {
            return Err(shape_err!(
                "{width}x{height} mask from {} labels",
                labels.len()
            ));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(invalid!("mask labels must be 0 or 1"));
        }
        Ok(GroundTruthMask {
            width,
            height,
            labels,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self.labels.iter().map(|&l| l as f64).collect();
        Tensor::from_parts(alloc::vec![1, self.height, self.width], data)
    }

    /// Nearest-sample rescale to `w × h`.
    pub fn resized(&self, w: usize, h: usize) -> Self {
        if w == self.width && h == self.height {
            return self.clone();
        }
        let mut labels = Vec::with_capacity(w * h);
        for r in 0..h {
            let sr = ((2 * r + 1) * self.height / (2 * h)).min(self.height - 1);
            for c in 0..w {
                let sc = ((2 * c + 1) * self.width / (2 * w)).min(self.width - 1);
                labels.push(self.labels[sr * self.width + sc]);
            }
        }
        GroundTruthMask {
            width: w,
            height: h,
            labels,
        }
    }
}

/// Thresholded saliency (`B_i`).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize, bits: Vec<u8>) -> Result<Self> {
        if bits.len() != width * height || bits.is_empty() {
            return Err(shape_err!("{width}x{height} mask from {} bits", bits.len()));
        }
        if bits.iter().any(|&b| b > 1) {
            return Err(invalid!("mask bits must be 0 or 1"));
        }
        Ok(BinaryMask {
            width,
            height,
            bits,
        })
    }

    pub fn filled(width: usize, height: usize, bit: bool) -> Self {
        BinaryMask {
            width,
            height,
            bits: alloc::vec![bit as u8; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits[row * self.width + col] == 1
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// A probability map with exactly these bits, usable with [`binarize`].
    pub fn to_map(&self) -> SaliencyMap {
        SaliencyMap {
            width: self.width,
            height: self.height,
            probs: self.bits.iter().map(|&b| b as f64).collect(),
        }
    }
}

pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// Bit is set iff the probability is at least `threshold`.
pub fn binarize(map: &SaliencyMap, threshold: f64) -> Result<BinaryMask> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(invalid!("binarization threshold {threshold} outside (0,1)"));
    }
    let bits = map.probs.iter().map(|&p| (p >= threshold) as u8).collect();
    Ok(BinaryMask {
        width: map.width,
        height: map.height,
        bits,
    })
}
