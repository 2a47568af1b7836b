//! A directory of trained models: `saliency.sstm`, `spatial-<kind>.sstm`,
//! `temporal-<kind>.sstm` and, once trained, `ensemble.json`.

use std::path::{Path, PathBuf};

use sstam_core::quality::SvrEnsemble;
use sstam_core::saliency::SaliencyNet;
use sstam_core::spatial::SpatialDetector;
use sstam_core::synth::PeaKind;
use sstam_core::temporal::TemporalDetector;

use crate::checkpoint::{decode, decode_kind, encode, Checkpointable};
use crate::error::{read_file, write_file, Error, Result};

pub const SALIENCY_FILE: &str = "saliency.sstm";
pub const ENSEMBLE_FILE: &str = "ensemble.json";

pub fn detector_file(kind: PeaKind) -> String {
    let family = if kind.is_spatial() {
        "spatial"
    } else {
        "temporal"
    };
    format!("{family}-{}.sstm", kind.name())
}

fn existing(dir: &Path, name: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if !path.is_file() {
        return Err(Error::Missing(format!("model file {}", path.display())));
    }
    Ok(path)
}

pub fn save_model<M: Checkpointable>(
    dir: &Path,
    name: &str,
    model: &M,
    seed: u64,
) -> Result<PathBuf> {
    let path = dir.join(name);
    write_file(&path, &encode(model, seed)?)?;
    Ok(path)
}

pub fn load_saliency(dir: &Path) -> Result<SaliencyNet> {
    Ok(decode::<SaliencyNet>(&read_file(existing(dir, SALIENCY_FILE)?)?)?.0)
}

pub fn load_spatial(dir: &Path, kind: PeaKind) -> Result<SpatialDetector> {
    decode_kind(&read_file(existing(dir, &detector_file(kind))?)?, kind)
}

pub fn load_temporal(dir: &Path, kind: PeaKind) -> Result<TemporalDetector> {
    decode_kind(&read_file(existing(dir, &detector_file(kind))?)?, kind)
}

pub fn save_ensemble(dir: &Path, ensemble: &SvrEnsemble) -> Result<PathBuf> {
    let path = dir.join(ENSEMBLE_FILE);
    write_file(&path, &serde_json::to_vec_pretty(ensemble)?)?;
    Ok(path)
}

pub fn load_ensemble(dir: &Path) -> Result<SvrEnsemble> {
    Ok(serde_json::from_slice(&read_file(existing(
        dir,
        ENSEMBLE_FILE,
    )?)?)?)
}

/// The saliency network and all six artifact detectors.
#[derive(Debug, Clone)]
pub struct Detectors {
    pub saliency: SaliencyNet,
    /// In [`PeaKind::SPATIAL`] order.
    pub spatial: Vec<SpatialDetector>,
    /// In [`PeaKind::TEMPORAL`] order.
    pub temporal: Vec<TemporalDetector>,
}

impl Detectors {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(Detectors {
            saliency: load_saliency(dir)?,
            spatial: PeaKind::SPATIAL
                .iter()
                .map(|&k| load_spatial(dir, k))
                .collect::<Result<_>>()?,
            temporal: PeaKind::TEMPORAL
                .iter()
                .map(|&k| load_temporal(dir, k))
                .collect::<Result<_>>()?,
        })
    }

    /// Writes every checkpoint, recording `seed` in each.
    pub fn save(&self, dir: &Path, seed: u64) -> Result<()> {
        save_model(dir, SALIENCY_FILE, &self.saliency, seed)?;
        for d in &self.spatial {
            save_model(dir, &detector_file(d.kind()), d, seed)?;
        }
        for d in &self.temporal {
            save_model(dir, &detector_file(d.kind()), d, seed)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_names() {
        assert_eq!(
            detector_file(PeaKind::ColorBleeding),
            "spatial-color_bleeding.sstm"
        );
        assert_eq!(detector_file(PeaKind::Floating), "temporal-floating.sstm");
    }

    #[test]
    fn missing_models_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            Detectors::load(dir.path()),
            Err(Error::Missing(_))
        ));
        assert!(matches!(load_ensemble(dir.path()), Err(Error::Missing(_))));
    }
}
