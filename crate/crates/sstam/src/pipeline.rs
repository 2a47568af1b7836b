//! Per-video scoring: saliency masks, the four spatial intensities, the two temporal
//! intensities and the ensemble's quality estimate.

use serde::{Deserialize, Serialize};
use sstam_core::quality::{PeaIntensityVector, SvrEnsemble};
use sstam_core::saliency::DEFAULT_THRESHOLD;
use sstam_core::spatial::{spatial_intensity, DEFAULT_COVERAGE};
use sstam_core::synth::PeaKind;
use sstam_core::temporal::temporal_intensity;
use sstam_core::video::VideoSequence;

use crate::error::Result;
use crate::models::Detectors;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Saliency binarization threshold.
    pub threshold: f64,
    /// Salient fraction a tile needs to be analysed.
    pub coverage: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            threshold: DEFAULT_THRESHOLD,
            coverage: DEFAULT_COVERAGE,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoIntensities {
    pub intensities: PeaIntensityVector,
    /// Mean salient-patch probability per frame, per spatial kind.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_frame: Vec<(PeaKind, Vec<f64>)>,
    /// Salient pixels per frame.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub salient_pixels: Vec<usize>,
}

/// All six intensities of one video; per-frame detail is kept when `verbose`.
pub fn video_intensities(
    seq: &VideoSequence,
    detectors: &Detectors,
    config: &PipelineConfig,
    verbose: bool,
) -> Result<VideoIntensities> {
    let masks = detectors.saliency.video_masks(seq, config.threshold)?;
    let mut v = PeaIntensityVector::default();
    let mut per_frame = Vec::new();
    for det in &detectors.spatial {
        let s = spatial_intensity(seq, &masks, det, config.coverage)?;
        v.set(det.kind(), s.value)?;
        if verbose {
            per_frame.push((det.kind(), s.per_frame));
        }
    }
    for det in &detectors.temporal {
        v.set(det.kind(), temporal_intensity(seq, det)?.value)?;
    }
    let salient_pixels = if verbose {
        masks.iter().map(|m| m.count()).collect()
    } else {
        Vec::new()
    };
    Ok(VideoIntensities {
        intensities: v,
        per_frame,
        salient_pixels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    #[serde(flatten)]
    pub detail: VideoIntensities,
    /// Predicted quality on the ensemble's score scale (DMOS-trained ensembles predict negated DMOS).
    pub quality: f64,
}

pub fn score_video(
    seq: &VideoSequence,
    detectors: &Detectors,
    ensemble: &SvrEnsemble,
    config: &PipelineConfig,
    verbose: bool,
) -> Result<VideoScore> {
    let detail = video_intensities(seq, detectors, config, verbose)?;
    let quality = ensemble.predict(&detail.intensities);
    Ok(VideoScore { detail, quality })
}
