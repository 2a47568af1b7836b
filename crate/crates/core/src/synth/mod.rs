//! Procedural compression-artifact synthesis: six injectors, textured
//! moving scenes with known object masks, and labeled corpora.

mod corpus;
mod inject;
mod scene;

use core::fmt;

pub use corpus::{
    synth_corpus, CorpusConfig, CorpusItem, LabeledClip, LabeledCorpus, LabeledPatch,
};
pub use inject::{
    blockiness, gradient_energy, inject_blocking, inject_blur, inject_color_bleeding,
    inject_flicker, inject_floating, inject_ringing,
};
pub use scene::{render_scene, Scene};

use crate::error::{invalid, Result};
use crate::video::VideoSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum PeaKind {
    Blocking,
    Blurring,
    ColorBleeding,
    Ringing,
    Flickering,
    Floating,
}

impl PeaKind {
    /// Fixed feature order of the intensity vector.
    pub const ALL: [PeaKind; 6] = [
        PeaKind::Blocking,
        PeaKind::Blurring,
        PeaKind::ColorBleeding,
        PeaKind::Ringing,
        PeaKind::Flickering,
        PeaKind::Floating,
    ];
    pub const SPATIAL: [PeaKind; 4] = [
        PeaKind::Blocking,
        PeaKind::Blurring,
        PeaKind::ColorBleeding,
        PeaKind::Ringing,
    ];
    pub const TEMPORAL: [PeaKind; 2] = [PeaKind::Flickering, PeaKind::Floating];

    pub fn is_spatial(self) -> bool {
        !self.is_temporal()
    }

    pub fn is_temporal(self) -> bool {
        matches!(self, PeaKind::Flickering | PeaKind::Floating)
    }

    /// Position in [`PeaKind::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            PeaKind::Blocking => "blocking",
            PeaKind::Blurring => "blurring",
            PeaKind::ColorBleeding => "color_bleeding",
            PeaKind::Ringing => "ringing",
            PeaKind::Flickering => "flickering",
            PeaKind::Floating => "floating",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

impl fmt::Display for PeaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Region {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Region {
    pub fn is_empty(&self) -> bool {
        self.height == 0 || self.width == 0
    }

    pub fn fits(&self, width: usize, height: usize) -> bool {
        self.row + self.height <= height && self.col + self.width <= width
    }

    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.row..self.row + self.height).contains(&row)
            && (self.col..self.col + self.width).contains(&col)
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SynthRecipe {
    pub kind: PeaKind,
    pub strength: f64,
    pub region: Option<Region>,
    /// Oscillation period in frames for the temporal kinds.
    pub period: usize,
    pub seed: u64,
}

impl SynthRecipe {
    pub const DEFAULT_PERIOD: usize = 8;

    pub fn new(kind: PeaKind, strength: f64) -> Self {
        SynthRecipe {
            kind,
            strength,
            region: None,
            period: Self::DEFAULT_PERIOD,
            seed: 0,
        }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        check_strength(self.strength)?;
        if self.kind.is_temporal() && self.period < 2 {
            return Err(invalid!(
                "period must be at least 2 frames, got {}",
                self.period
            ));
        }
        if let Some(r) = self.region {
            if !r.fits(width, height) {
                return Err(invalid!("region {:?} outside {width}x{height}", r));
            }
        }
        Ok(())
    }

    /// Applies the recipe; floating without a region covers the whole frame.
    pub fn apply(&self, seq: &VideoSequence) -> Result<VideoSequence> {
        self.validate(seq.width(), seq.height())?;
        let s = self.strength;
        match self.kind {
            PeaKind::Blocking => inject_blocking(seq, s),
            PeaKind::Blurring => inject_blur(seq, s),
            PeaKind::ColorBleeding => inject_color_bleeding(seq, s),
            PeaKind::Ringing => inject_ringing(seq, s),
            PeaKind::Flickering => inject_flicker(seq, s, self.period),
            PeaKind::Floating => {
                let full = Region {
                    row: 0,
                    col: 0,
                    height: seq.height(),
                    width: seq.width(),
                };
                inject_floating(seq, s, self.region.unwrap_or(full), self.period)
            }
        }
    }
}

pub(crate) fn check_strength(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(invalid!("strength {s} outside [0,1]"));
    }
    Ok(())
}

/// `100 − 80·mean(strengths)`, clamped to `[0,100]`; 100 for an empty list.
pub fn pseudo_mos(strengths: &[f64]) -> f64 {
    if strengths.is_empty() {
        return 100.0;
    }
    let mean = strengths.iter().sum::<f64>() / strengths.len() as f64;
    (100.0 - 80.0 * mean).clamp(0.0, 100.0)
}

/// Strength 0 is a negative, strength ≥ 0.5 a positive; anything between is unlabeled.
pub fn label_for(strength: f64) -> Option<bool> {
    if strength == 0.0 {
        Some(false)
    } else if strength >= 0.5 {
        Some(true)
    } else {
        None
    }
}
