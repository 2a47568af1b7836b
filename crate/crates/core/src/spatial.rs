//! Spatial artifact detection: salient 72×72 patches, per-kind dense-block
//! classifiers and the per-video intensity aggregate.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::layers::{Conv, Linear};
use crate::optim::{fit, FitOptions};
use crate::param::ParamStore;
use crate::rng::{mix, seeded};
use crate::saliency::BinaryMask;
use crate::synth::{LabeledPatch, PeaKind};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::video::{crop, yuv_unit, Frame, VideoSequence};

pub const PATCH_SIDE: usize = 72;
pub const DEFAULT_COVERAGE: f64 = 0.5;

/// A `[3,side,side]` YCbCr window of frame `frame` at `origin` (row, col).
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub pixels: Tensor,
    pub frame: usize,
    pub index: usize,
    pub origin: (usize, usize),
}

/// Origins of the anchored `side`-grid tiles whose salient fraction reaches `coverage`,
/// or the single best tile when none does.
pub fn salient_tiles(mask: &BinaryMask, coverage: f64, side: usize) -> Result<Vec<(usize, usize)>> {
    let (w, h) = (mask.width(), mask.height());
    if side == 0 || w < side || h < side {
        return Err(invalid!("{w}x{h} frame smaller than {side}x{side} patch"));
    }
    let area = (side * side) as f64;
    let mut chosen = Vec::new();
    let mut best = ((0, 0), -1.0);
    for row in (0..=h - side).step_by(side) {
        for col in (0..=w - side).step_by(side) {
            let on: usize = (row..row + side)
                .map(|r| {
                    mask.bits()[r * w + col..r * w + col + side]
                        .iter()
                        .map(|&b| b as usize)
                        .sum::<usize>()
                })
                .sum();
            let frac = on as f64 / area;
            if frac >= coverage {
                chosen.push((row, col));
            }
            if frac > best.1 {
                best = ((row, col), frac);
            }
        }
    }
    if chosen.is_empty() {
        chosen.push(best.0);
    }
    Ok(chosen)
}

/// Salient patches of one frame.
pub fn salient_patches(
    frame: &Frame,
    frame_index: usize,
    mask: &BinaryMask,
    coverage: f64,
) -> Result<Vec<Patch>> {
    salient_patches_sized(frame, frame_index, mask, coverage, PATCH_SIDE)
}

pub fn salient_patches_sized(
    frame: &Frame,
    frame_index: usize,
    mask: &BinaryMask,
    coverage: f64,
    side: usize,
) -> Result<Vec<Patch>> {
    if (mask.width(), mask.height()) != (frame.width(), frame.height()) {
        return Err(shape_err!(
            "mask {}x{} vs frame {}x{}",
            mask.width(),
            mask.height(),
            frame.width(),
            frame.height()
        ));
    }
    let tiles = salient_tiles(mask, coverage, side)?;
    let yuv = yuv_unit(frame);
    tiles
        .into_iter()
        .enumerate()
        .map(|(index, origin)| {
            Ok(Patch {
                pixels: crop(&yuv, origin.0, origin.1, side)?,
                frame: frame_index,
                index,
                origin,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpatialDetectorConfig {
    pub patch_side: usize,
    pub channels: usize,
    pub stem_channels: usize,
    pub growth: usize,
    pub blocks: usize,
    pub layers_per_block: usize,
}

impl Default for SpatialDetectorConfig {
    fn default() -> Self {
        SpatialDetectorConfig {
            patch_side: PATCH_SIDE,
            channels: 3,
            stem_channels: 8,
            growth: 4,
            blocks: 3,
            layers_per_block: 2,
        }
    }
}

impl SpatialDetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_side < 4 || self.channels == 0 || self.stem_channels == 0 || self.growth == 0
        {
            return Err(invalid!("degenerate detector config {:?}", self));
        }
        if self.blocks == 0 || self.layers_per_block == 0 {
            return Err(invalid!(
                "detector needs at least one dense block and layer"
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct DenseLayers {
    stem: Conv,
    blocks: Vec<Vec<Conv>>,
    head: Linear,
}

impl DenseLayers {
    /// Logit of a `[C,P,P]` patch, shape `[1]`.
    fn logit(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let centered = tape.add_scalar(x, -0.5);
        let stem = self.stem.forward(tape, store, centered)?;
        let mut h = tape.relu(stem);
        for (b, block) in self.blocks.iter().enumerate() {
            if b > 0 {
                h = tape.max_pool2(h)?;
            }
            for conv in block {
                let y = conv.forward(tape, store, h)?;
                let y = tape.relu(y);
                h = tape.concat(&[h, y])?;
            }
        }
        let pooled = tape.global_avg_pool(h)?;
        self.head.forward(tape, store, pooled)
    }
}

/// Dense-block CNN emitting the probability that a patch shows its artifact kind.
#[derive(Debug, Clone)]
pub struct SpatialDetector {
    kind: PeaKind,
    config: SpatialDetectorConfig,
    store: ParamStore,
    layers: DenseLayers,
}

impl SpatialDetector {
    pub fn new(kind: PeaKind, config: SpatialDetectorConfig, seed: u64) -> Result<Self> {
        if !kind.is_spatial() {
            return Err(invalid!("{kind} is not a spatial artifact"));
        }
        config.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let stem = Conv::new(
            &mut store,
            "stem",
            config.channels,
            config.stem_channels,
            3,
            2,
            &mut rng,
        );
        let mut c = config.stem_channels;
        let mut blocks = Vec::with_capacity(config.blocks);
        for b in 0..config.blocks {
            let mut layers = Vec::with_capacity(config.layers_per_block);
            for l in 0..config.layers_per_block {
                layers.push(Conv::new(
                    &mut store,
                    &format!("block{b}.layer{l}"),
                    c,
                    config.growth,
                    3,
                    1,
                    &mut rng,
                ));
                c += config.growth;
            }
            blocks.push(layers);
        }
        let head = Linear::new(&mut store, "head", c, 1, &mut rng);
        Ok(SpatialDetector {
            kind,
            config,
            store,
            layers: DenseLayers { stem, blocks, head },
        })
    }

    pub fn kind(&self) -> PeaKind {
        self.kind
    }

    pub fn config(&self) -> &SpatialDetectorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn check(&self, pixels: &Tensor) -> Result<()> {
        let (c, p) = (self.config.channels, self.config.patch_side);
        if pixels.shape() != [c, p, p] {
            return Err(shape_err!(
                "detector expects [{c},{p},{p}], got {:?}",
                pixels.shape()
            ));
        }
        Ok(())
    }

    /// Records the sigmoid output for a patch tensor.
    pub fn forward_tape(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.check(tape.value(x))?;
        let logit = self.layers.logit(tape, &self.store, x)?;
        Ok(tape.sigmoid(logit))
    }

    pub fn probability(&self, pixels: &Tensor) -> Result<f64> {
        self.check(pixels)?;
        let mut tape = Tape::new();
        let x = tape.constant(pixels.clone());
        let p = self.forward_tape(&mut tape, x)?;
        tape.value(p).item()
    }

    /// `I_ij` for one patch.
    pub fn detect(&self, patch: &Patch) -> Result<f64> {
        self.probability(&patch.pixels)
    }

    /// Fraction of patches whose thresholded probability matches the label.
    pub fn accuracy(&self, patches: &[LabeledPatch]) -> Result<f64> {
        if patches.is_empty() {
            return Err(Error::Empty("patches"));
        }
        let mut hits = 0usize;
        for p in patches {
            hits += ((self.probability(&p.pixels)? >= 0.5) == p.label) as usize;
        }
        Ok(hits as f64 / patches.len() as f64)
    }
}

/// Binary cross-entropy of a probability against a 0/1 target.
pub(crate) fn bce_scalar(tape: &mut Tape, p: Var, label: bool) -> Result<Var> {
    let pc = tape.clamp(p, 1e-7, 1.0 - 1e-7);
    let target = if label {
        pc
    } else {
        let neg = tape.mul_scalar(pc, -1.0);
        tape.add_scalar(neg, 1.0)
    };
    let l = tape.log(target);
    let s = tape.sum(l);
    Ok(tape.mul_scalar(s, -1.0))
}

#[derive(Debug, Clone)]
pub struct TrainedDetector {
    pub detector: SpatialDetector,
    pub epoch_losses: Vec<f64>,
}

pub(crate) fn check_two_classes<'a>(labels: impl Iterator<Item = &'a bool>) -> Result<()> {
    let (mut pos, mut neg) = (false, false);
    for &l in labels {
        pos |= l;
        neg |= !l;
    }
    if !(pos && neg) {
        return Err(invalid!("training corpus must contain both labels"));
    }
    Ok(())
}

/// Seeded training on labeled patches of one kind.
pub fn train_detector(
    patches: &[LabeledPatch],
    kind: PeaKind,
    config: &SpatialDetectorConfig,
    opts: FitOptions,
    seed: u64,
) -> Result<TrainedDetector> {
    check_two_classes(patches.iter().map(|p| &p.label))?;
    let mut detector = SpatialDetector::new(kind, config.clone(), mix(seed, kind.index() as u64))?;
    if let Some(bad) = patches.iter().find(|p| detector.check(&p.pixels).is_err()) {
        return Err(shape_err!(
            "patch shape {:?} does not match detector",
            bad.pixels.shape()
        ));
    }
    let SpatialDetector { store, layers, .. } = &mut detector;
    let epoch_losses = fit(store, patches, opts, seed, |tape, store, p| {
        let x = tape.constant(p.pixels.clone());
        let logit = layers.logit(tape, store, x)?;
        let prob = tape.sigmoid(logit);
        bce_scalar(tape, prob, p.label)
    })?;
    Ok(TrainedDetector {
        detector,
        epoch_losses,
    })
}

/// Per-video spatial intensity and its per-frame means.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpatialIntensity {
    pub value: f64,
    pub per_frame: Vec<f64>,
}

/// Mean over frames of each frame's mean patch probability.
pub fn aggregate(per_frame: &[Vec<f64>]) -> Result<SpatialIntensity> {
    if per_frame.is_empty() {
        return Err(Error::Empty("frame probabilities"));
    }
    let mut means = Vec::with_capacity(per_frame.len());
    for (i, probs) in per_frame.iter().enumerate() {
        if probs.is_empty() {
            return Err(invalid!("frame {i} has no patch probabilities"));
        }
        means.push(probs.iter().sum::<f64>() / probs.len() as f64);
    }
    let value = means.iter().sum::<f64>() / means.len() as f64;
    Ok(SpatialIntensity {
        value,
        per_frame: means,
    })
}

/// Spatial intensity of a video given one salient mask per frame.
pub fn spatial_intensity(
    seq: &VideoSequence,
    masks: &[BinaryMask],
    detector: &SpatialDetector,
    coverage: f64,
) -> Result<SpatialIntensity> {
    if masks.len() != seq.len() {
        return Err(shape_err!("{} masks for {} frames", masks.len(), seq.len()));
    }
    let side = detector.config().patch_side;
    let mut per_frame = Vec::with_capacity(seq.len());
    for (t, (frame, mask)) in seq.frames().iter().zip(masks).enumerate() {
        let patches = salient_patches_sized(frame, t, mask, coverage, side)?;
        per_frame.push(
            patches
                .iter()
                .map(|p| detector.detect(p))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    aggregate(&per_frame)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn mask_with(w: usize, h: usize, on: impl Fn(usize, usize) -> bool) -> BinaryMask {
        let bits = (0..h)
            .flat_map(|r| (0..w).map(move |c| (r, c)))
            .map(|(r, c)| on(r, c) as u8)
            .collect();
        BinaryMask::new(w, h, bits).unwrap()
    }

    #[test]
    fn tiling_examples() {
        assert_eq!(
            salient_tiles(&BinaryMask::filled(144, 144, true), 0.5, 72)
                .unwrap()
                .len(),
            4
        );
        assert_eq!(
            salient_tiles(&BinaryMask::filled(144, 144, false), 0.5, 72).unwrap(),
            vec![(0, 0)]
        );
        let tl = mask_with(144, 144, |r, c| r < 72 && c < 72);
        assert_eq!(salient_tiles(&tl, 0.5, 72).unwrap(), vec![(0, 0)]);
        let br = mask_with(150, 150, |r, c| r >= 100 && c >= 100);
        assert_eq!(salient_tiles(&br, 0.5, 72).unwrap(), vec![(72, 72)]);
        assert!(salient_tiles(&BinaryMask::filled(71, 144, true), 0.5, 72).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert!((aggregate(&[vec![0.2, 0.4], vec![0.6, 0.8]]).unwrap().value - 0.5).abs() < 1e-15);
        assert_eq!(aggregate(&[vec![1.0; 3], vec![1.0]]).unwrap().value, 1.0);
        assert_eq!(aggregate(&[vec![0.37]]).unwrap().value, 0.37);
        assert!(aggregate(&[]).is_err());
        assert!(aggregate(&[vec![]]).is_err());
    }

    #[test]
    fn video_intensity_matches_manual_aggregate() {
        let cfg = SpatialDetectorConfig {
            patch_side: 16,
            ..Default::default()
        };
        let det = SpatialDetector::new(PeaKind::Ringing, cfg, 5).unwrap();
        let frames = (0..3)
            .map(|t| {
                Frame::from_luma(crate::video::Plane::from_fn(32, 32, |r, c| {
                    (r * 5 + c * 3 + t * 40) as u8
                }))
            })
            .collect();
        let seq = VideoSequence::new(frames, 25, 1).unwrap();
        let masks = vec![BinaryMask::filled(32, 32, true); 3];
        let got = spatial_intensity(&seq, &masks, &det, 0.5).unwrap();
        let manual: Vec<Vec<f64>> = seq
            .frames()
            .iter()
            .enumerate()
            .map(|(t, f)| {
                salient_patches_sized(f, t, &masks[t], 0.5, 16)
                    .unwrap()
                    .iter()
                    .map(|p| det.detect(p).unwrap())
                    .collect()
            })
            .collect();
        assert_eq!(manual[0].len(), 4);
        assert_eq!(got, aggregate(&manual).unwrap());
        assert!(spatial_intensity(&seq, &masks[..2], &det, 0.5).is_err());
    }

    #[test]
    fn detector_outputs_probabilities() {
        let cfg = SpatialDetectorConfig {
            patch_side: 16,
            ..Default::default()
        };
        let det = SpatialDetector::new(PeaKind::Blocking, cfg, 2).unwrap();
        let x = Tensor::full(&[3, 16, 16], 0.3);
        let p = det.probability(&x).unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert_eq!(p, det.probability(&x).unwrap());
        assert!(det.probability(&Tensor::full(&[1, 16, 16], 0.3)).is_err());
        assert!(
            SpatialDetector::new(PeaKind::Flickering, SpatialDetectorConfig::default(), 0).is_err()
        );
    }
}
