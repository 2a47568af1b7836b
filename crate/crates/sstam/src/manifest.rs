//! JSON manifests. File paths inside a manifest are relative to the manifest's directory.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sstam_core::quality::ScoreKind;
use sstam_core::saliency::{GroundTruthMask, SaliencySample};
use sstam_core::synth::{CorpusConfig, LabeledClip, LabeledCorpus, LabeledPatch, PeaKind};
use sstam_core::video::{crop, luma_unit, yuv_unit, Plane, VideoSequence};

use crate::error::{malformed, read_file, write_file, Error, Result};
use crate::pgm::{mask_plane, read_mask, read_pgm, write_pgm};
use crate::y4m::{parse_y4m, to_y4m_bytes};
use crate::yuv::read_raw_yuv420;

pub fn base_dir(manifest: &Path) -> PathBuf {
    manifest.parent().map(Path::to_path_buf).unwrap_or_default()
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_slice(&read_file(path)?)
        .map_err(|e| malformed("manifest", format!("{}: {e}", path.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    write_file(path, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthItem {
    pub id: String,
    pub kind: PeaKind,
    pub strength: f64,
    pub file: String,
    pub label: Option<bool>,
    pub pseudo_mos: f64,
    /// Per-frame object masks stacked top to bottom in one PGM.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask_file: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub seed: u64,
    pub config: CorpusConfig,
    pub items: Vec<SynthItem>,
}

fn stack_masks(masks: &[GroundTruthMask]) -> Plane {
    let (w, h) = (masks[0].width(), masks[0].height());
    let samples = masks
        .iter()
        .flat_map(|m| mask_plane(m).samples().to_vec())
        .collect();
    Plane::new(w, h * masks.len(), samples).expect("masks share geometry")
}

/// Splits a stacked mask PGM back into `frames` masks.
pub fn unstack_masks(bytes: &[u8], frames: usize) -> Result<Vec<GroundTruthMask>> {
    let all = read_mask(bytes)?;
    if frames == 0 || all.height() % frames != 0 {
        return Err(malformed(
            "mask stack",
            format!(
                "height {} does not split into {frames} frames",
                all.height()
            ),
        ));
    }
    let (w, h) = (all.width(), all.height() / frames);
    all.labels()
        .chunks_exact(w * h)
        .map(|c| GroundTruthMask::new(w, h, c.to_vec()).map_err(Error::from))
        .collect()
}

/// Writes every item as `videos/<id>.y4m` and `masks/<id>.pgm` next to `manifest.json`.
pub fn write_synth_corpus(dir: &Path, corpus: &LabeledCorpus, seed: u64) -> Result<SynthManifest> {
    let mut items = Vec::with_capacity(corpus.items.len());
    for item in &corpus.items {
        let file = format!("videos/{}.y4m", item.id);
        let mask_file = format!("masks/{}.pgm", item.id);
        write_file(dir.join(&file), &to_y4m_bytes(&item.video))?;
        write_file(
            dir.join(&mask_file),
            &write_pgm(&stack_masks(&item.clean.masks)),
        )?;
        items.push(SynthItem {
            id: item.id.clone(),
            kind: item.recipe.kind,
            strength: item.recipe.strength,
            file,
            label: item.label,
            pseudo_mos: item.pseudo_mos,
            mask_file: Some(mask_file),
        });
    }
    let manifest = SynthManifest {
        seed,
        config: corpus.config.clone(),
        items,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

impl SynthManifest {
    /// Items of `kind` that carry a label, with their decoded videos.
    pub fn labeled_videos(
        &self,
        base: &Path,
        kind: PeaKind,
    ) -> Result<Vec<(&SynthItem, bool, VideoSequence)>> {
        let mut out = Vec::new();
        for item in self.items.iter().filter(|i| i.kind == kind) {
            if let Some(label) = item.label {
                out.push((item, label, parse_y4m(&read_file(base.join(&item.file))?)?));
            }
        }
        if out.is_empty() {
            return Err(Error::Missing(format!("labeled {kind} items in manifest")));
        }
        Ok(out)
    }

    /// Every anchored `side` tile of every `frame_stride`-th frame of the labeled items of `kind`.
    pub fn patches(
        &self,
        base: &Path,
        kind: PeaKind,
        frame_stride: usize,
        side: usize,
    ) -> Result<Vec<LabeledPatch>> {
        let mut out = Vec::new();
        for (i, (item, label, video)) in self.labeled_videos(base, kind)?.into_iter().enumerate() {
            for (t, frame) in video
                .frames()
                .iter()
                .enumerate()
                .step_by(frame_stride.max(1))
            {
                let yuv = yuv_unit(frame);
                for row in (0..=frame.height().saturating_sub(side)).step_by(side) {
                    for col in (0..=frame.width().saturating_sub(side)).step_by(side) {
                        out.push(LabeledPatch {
                            pixels: crop(&yuv, row, col, side)?,
                            label,
                            strength: item.strength,
                            item: i,
                            frame: t,
                            origin: (row, col),
                        });
                    }
                }
            }
        }
        Ok(out)
    }

    /// Disjoint `n_t`-frame luma clips of the labeled items of `kind`.
    pub fn clips(&self, base: &Path, kind: PeaKind, n_t: usize) -> Result<Vec<LabeledClip>> {
        let mut out = Vec::new();
        for (i, (item, label, video)) in self.labeled_videos(base, kind)?.into_iter().enumerate() {
            for chunk in video.frames().chunks_exact(n_t.max(1)) {
                out.push(LabeledClip {
                    frames: chunk.iter().map(luma_unit).collect(),
                    label,
                    strength: item.strength,
                    item: i,
                });
            }
        }
        if out.is_empty() {
            return Err(Error::Missing(format!(
                "{n_t}-frame {kind} clips in manifest"
            )));
        }
        Ok(out)
    }
}

/// Writes every `frame_stride`-th frame's luma and object mask as PGM pairs under `dir/saliency`.
pub fn write_saliency_pairs(
    dir: &Path,
    corpus: &LabeledCorpus,
    frame_stride: usize,
) -> Result<SaliencyManifest> {
    let mut pairs = Vec::new();
    for item in &corpus.items {
        for (t, (frame, mask)) in item
            .video
            .frames()
            .iter()
            .zip(&item.clean.masks)
            .enumerate()
            .step_by(frame_stride.max(1))
        {
            let image = format!("saliency/{}-f{t:03}.pgm", item.id);
            let mask_name = format!("saliency/{}-f{t:03}-mask.pgm", item.id);
            write_file(dir.join(&image), &write_pgm(&frame.y))?;
            write_file(dir.join(&mask_name), &write_pgm(&mask_plane(mask)))?;
            pairs.push(SaliencyPair {
                image,
                mask: mask_name,
            });
        }
    }
    let manifest = SaliencyManifest { pairs };
    write_json(&dir.join("saliency.json"), &manifest)?;
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyPair {
    pub image: String,
    pub mask: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyManifest {
    pub pairs: Vec<SaliencyPair>,
}

impl SaliencyManifest {
    pub fn load_samples(&self, base: &Path) -> Result<Vec<SaliencySample>> {
        self.pairs
            .iter()
            .map(|p| {
                let image = read_pgm(&read_file(base.join(&p.image))?)?.unit();
                let mask = read_mask(&read_file(base.join(&p.mask))?)?;
                Ok(SaliencySample::new(image, mask)?)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "container", rename_all = "lowercase")]
pub enum MediaFormat {
    Y4m,
    /// Headerless I420 with the geometry given here.
    Yuv {
        width: usize,
        height: usize,
        fps_num: u32,
        fps_den: u32,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseVideo {
    pub id: String,
    pub file: String,
    pub score: f64,
}

/// A subjective database: videos with MOS or DMOS.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatabaseManifest {
    pub name: String,
    pub score_kind: ScoreKind,
    pub format: MediaFormat,
    pub videos: Vec<DatabaseVideo>,
}

impl DatabaseManifest {
    pub fn read_video(&self, base: &Path, video: &DatabaseVideo) -> Result<VideoSequence> {
        let bytes = read_file(base.join(&video.file))?;
        match self.format {
            MediaFormat::Y4m => parse_y4m(&bytes),
            MediaFormat::Yuv {
                width,
                height,
                fps_num,
                fps_den,
            } => read_raw_yuv420(&bytes, width, height, (fps_num, fps_den)),
        }
    }
}

impl SynthManifest {
    /// Views the corpus as a MOS database scored by pseudo-MOS.
    pub fn as_database(&self, name: &str) -> DatabaseManifest {
        DatabaseManifest {
            name: name.to_string(),
            score_kind: ScoreKind::Mos,
            format: MediaFormat::Y4m,
            videos: self
                .items
                .iter()
                .map(|i| DatabaseVideo {
                    id: i.id.clone(),
                    file: i.file.clone(),
                    score: i.pseudo_mos,
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnyManifest {
    Database(DatabaseManifest),
    Synth(SynthManifest),
}

/// Loads either manifest kind as a database; synthetic corpora are named after their file stem.
pub fn load_database(path: &Path) -> Result<DatabaseManifest> {
    Ok(match read_json::<AnyManifest>(path)? {
        AnyManifest::Database(d) => d,
        AnyManifest::Synth(s) => {
            let stem = path
                .parent()
                .and_then(|p| p.file_name())
                .map(|s| s.to_string_lossy().into_owned());
            s.as_database(&stem.unwrap_or_else(|| "synthetic".into()))
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use sstam_core::synth::synth_corpus;

    #[test]
    fn synthetic_corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let config = CorpusConfig {
            width: 32,
            height: 32,
            frames: 3,
            kinds: vec![PeaKind::Blurring],
            strengths: vec![0.0, 1.0],
            repeats: 1,
            patch_side: 16,
            ..Default::default()
        };
        let corpus = synth_corpus(&config, 4).unwrap();
        let m = write_synth_corpus(dir.path(), &corpus, 4).unwrap();
        assert_eq!(m.items.len(), 2);
        assert_eq!(m.items[1].label, Some(true));
        let back: SynthManifest = read_json(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(back, m);
        let db = load_database(&dir.path().join("manifest.json")).unwrap();
        assert_eq!(db.score_kind, ScoreKind::Mos);
        let v = db.read_video(dir.path(), &db.videos[1]).unwrap();
        assert_eq!(v, corpus.items[1].video);
        let masks = unstack_masks(
            &read_file(
                dir.path()
                    .join("masks")
                    .join(format!("{}.pgm", m.items[0].id)),
            )
            .unwrap(),
            3,
        )
        .unwrap();
        assert_eq!(masks, corpus.items[0].clean.masks);
        assert_eq!(
            m.patches(dir.path(), PeaKind::Blurring, 2, 16).unwrap(),
            corpus.patches(PeaKind::Blurring, 2).unwrap()
        );
        let clips = m.clips(dir.path(), PeaKind::Blurring, 3).unwrap();
        assert_eq!(clips, corpus.clips(PeaKind::Blurring, 3).unwrap());
        let pairs = write_saliency_pairs(dir.path(), &corpus, 2).unwrap();
        assert_eq!(pairs.pairs.len(), 4);
        let samples = pairs.load_samples(dir.path()).unwrap();
        assert_eq!(samples[1].mask, corpus.items[0].clean.masks[2]);
    }

    #[test]
    fn database_manifest_json() {
        let json = r#"{"name":"db","score_kind":"DMOS","format":{"container":"yuv","width":4,"height":4,"fps_num":25,"fps_den":1},
            "videos":[{"id":"a","file":"a.yuv","score":31.5}]}"#;
        let m: AnyManifest = serde_json::from_str(json).unwrap();
        let AnyManifest::Database(d) = m else {
            panic!("parsed as synthetic")
        };
        assert_eq!(d.score_kind, ScoreKind::Dmos);
        assert_eq!(
            d.format,
            MediaFormat::Yuv {
                width: 4,
                height: 4,
                fps_num: 25,
                fps_den: 1
            }
        );
    }
}
