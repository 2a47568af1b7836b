use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::rng::{derive, mix};
use crate::tensor::Tensor;
use crate::video::{crop, luma_unit, yuv_unit, VideoSequence};

use super::scene::{render_scene, Scene};
use super::{check_strength, label_for, pseudo_mos, PeaKind, Region, SynthRecipe};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CorpusConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    pub fps: u32,
    pub kinds: Vec<PeaKind>,
    pub strengths: Vec<f64>,
    /// Items per (kind, strength) cell.
    pub repeats: usize,
    /// Flicker period in frames.
    pub period: usize,
    /// Floating drift period in frames.
    pub drift_period: usize,
    pub patch_side: usize,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            width: 144,
            height: 144,
            frames: 16,
            fps: 25,
            kinds: PeaKind::ALL.to_vec(),
            strengths: alloc::vec![0.0, 0.25, 0.5, 0.75, 1.0],
            repeats: 2,
            period: SynthRecipe::DEFAULT_PERIOD,
            drift_period: 32,
            patch_side: 72,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.patch_side == 0 || self.patch_side > self.width || self.patch_side > self.height {
            return Err(invalid!(
                "{0}x{0} patches do not fit {1}x{2} frames",
                self.patch_side,
                self.width,
                self.height
            ));
        }
        if self.kinds.is_empty() || self.strengths.is_empty() || self.repeats == 0 {
            return Err(invalid!(
                "corpus needs at least one kind, strength and repeat"
            ));
        }
        if self.period < 2 || self.drift_period < 2 {
            return Err(invalid!("periods must be at least 2 frames"));
        }
        self.strengths.iter().try_for_each(|&s| check_strength(s))
    }

    pub fn len(&self) -> usize {
        self.kinds.len() * self.strengths.len() * self.repeats
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One degraded sequence with its clean source and masks.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    pub id: String,
    pub recipe: SynthRecipe,
    pub clean: Scene,
    pub video: VideoSequence,
    pub pseudo_mos: f64,
    pub label: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledCorpus {
    pub config: CorpusConfig,
    pub items: Vec<CorpusItem>,
}

/// A `[3,P,P]` YCbCr unit-interval patch with its label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPatch {
    pub pixels: Tensor,
    pub label: bool,
    pub strength: f64,
    pub item: usize,
    pub frame: usize,
    pub origin: (usize, usize),
}

/// `N_t` consecutive `[1,H,W]` luma grids with the item's label.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledClip {
    pub frames: Vec<Tensor>,
    pub label: bool,
    pub strength: f64,
    pub item: usize,
}

fn random_region(width: usize, height: usize, rng: &mut impl Rng) -> Region {
    let h = rng.gen_range(height * 2 / 5..=height * 3 / 5).max(1);
    let w = rng.gen_range(width * 2 / 5..=width * 3 / 5).max(1);
    Region {
        row: rng.gen_range(0..=height - h),
        col: rng.gen_range(0..=width - w),
        height: h,
        width: w,
    }
}

/// Kinds × strengths × repeats single-kind items, each on its own procedural scene.
pub fn synth_corpus(config: &CorpusConfig, seed: u64) -> Result<LabeledCorpus> {
    config.validate()?;
    let mut items = Vec::with_capacity(config.len());
    for &kind in &config.kinds {
        for (si, &strength) in config.strengths.iter().enumerate() {
            for rep in 0..config.repeats {
                let index = items.len() as u64;
                let item_seed = mix(seed, index);
                let clean = render_scene(
                    config.width,
                    config.height,
                    config.frames,
                    config.fps,
                    item_seed,
                )?;
                let mut rng = derive(item_seed, 1);
                let region = (kind == PeaKind::Floating)
                    .then(|| random_region(config.width, config.height, &mut rng));
                let period = if kind == PeaKind::Floating {
                    config.drift_period
                } else {
                    config.period
                };
                let recipe = SynthRecipe {
                    kind,
                    strength,
                    region,
                    period,
                    seed: item_seed,
                };
                let video = recipe.apply(&clean.video)?;
                items.push(CorpusItem {
                    id: format!(
                        "{}-s{:03}-{si}-{rep:02}",
                        kind.name(),
                        libm::round(strength * 100.0) as u32
                    ),
                    recipe,
                    clean,
                    video,
                    pseudo_mos: pseudo_mos(&[strength]),
                    label: label_for(strength),
                });
            }
        }
    }
    Ok(LabeledCorpus {
        config: config.clone(),
        items,
    })
}

impl LabeledCorpus {
    pub fn items_of(&self, kind: PeaKind) -> impl Iterator<Item = (usize, &CorpusItem)> {
        self.items
            .iter()
            .enumerate()
            .filter(move |(_, it)| it.recipe.kind == kind)
    }

    /// Every anchored tile of every `frame_stride`-th frame of the labeled items of `kind`.
    pub fn patches(&self, kind: PeaKind, frame_stride: usize) -> Result<Vec<LabeledPatch>> {
        let p = self.config.patch_side;
        let stride = frame_stride.max(1);
        let mut out = Vec::new();
        for (i, item) in self.items_of(kind) {
            let Some(label) = item.label else { continue };
            for (t, frame) in item.video.frames().iter().enumerate().step_by(stride) {
                let yuv = yuv_unit(frame);
                for row in (0..=frame.height() - p).step_by(p) {
                    for col in (0..=frame.width() - p).step_by(p) {
                        let pixels = crop(&yuv, row, col, p)?;
                        out.push(LabeledPatch {
                            pixels,
                            label,
                            strength: item.recipe.strength,
                            item: i,
                            frame: t,
                            origin: (row, col),
                        });
                    }
                }
            }
        }
        if out.is_empty() {
            return Err(Error::Empty("labeled patches"));
        }
        Ok(out)
    }

    /// Disjoint `n_t`-frame luma clips of the labeled items of `kind`.
    pub fn clips(&self, kind: PeaKind, n_t: usize) -> Result<Vec<LabeledClip>> {
        if n_t == 0 {
            return Err(invalid!("clip length must be positive"));
        }
        let mut out = Vec::new();
        for (i, item) in self.items_of(kind) {
            let Some(label) = item.label else { continue };
            for chunk in item.video.frames().chunks_exact(n_t) {
                out.push(LabeledClip {
                    frames: chunk.iter().map(luma_unit).collect(),
                    label,
                    strength: item.recipe.strength,
                    item: i,
                });
            }
        }
        if out.is_empty() {
            return Err(Error::Empty("labeled clips"));
        }
        Ok(out)
    }
}
