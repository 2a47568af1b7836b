//! Benchmark orchestration: scoring manifest corpora with trained models, and the fully
//! synthetic end-to-end run that trains every model from generated data.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sstam_core::optim::FitOptions;
use sstam_core::quality::{ScoreKind, SvrParams};
use sstam_core::rng::mix;
use sstam_core::saliency::{self, SaliencyNetConfig, SaliencySample, SaliencyTrainOptions};
use sstam_core::spatial::{train_detector, SpatialDetectorConfig};
use sstam_core::synth::{synth_corpus, CorpusConfig, LabeledCorpus, PeaKind};
use sstam_core::temporal::{train_temporal, TemporalDetectorConfig};
use sstam_core::video::luma_unit;

use crate::error::{Error, Result};
use crate::manifest::{base_dir, load_database};
use crate::models::Detectors;
use crate::pipeline::{video_intensities, PipelineConfig};
use crate::report::{
    config_digest, evaluate_corpus, split_seeds, BenchmarkReport, DetectorGap, Seeds, VideoRecord,
};

/// Fewest videos a corpus may have: the 8:2 split must leave ten training records.
pub const MIN_CORPUS_VIDEOS: usize = 13;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchConfig {
    /// Directory holding the saliency and detector checkpoints.
    pub models: PathBuf,
    /// Database or synthetic corpus manifests.
    pub corpora: Vec<PathBuf>,
    /// Seeded 8:2 splits per corpus; correlations report the median.
    pub repeats: usize,
    pub svr: SvrParams,
    pub pipeline: PipelineConfig,
    pub logistic: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            models: PathBuf::from("models"),
            corpora: Vec::new(),
            repeats: 1,
            svr: SvrParams::default(),
            pipeline: PipelineConfig::default(),
            logistic: false,
        }
    }
}

fn check_repeats(repeats: usize) -> Result<()> {
    if repeats == 0 {
        return Err(sstam_core::Error::InvalidArgument("repeats must be at least 1".into()).into());
    }
    Ok(())
}

fn check_size(name: &str, n: usize) -> Result<()> {
    if n < MIN_CORPUS_VIDEOS {
        return Err(sstam_core::Error::InvalidArgument(format!(
            "corpus {name} has {n} videos; correlation needs at least {MIN_CORPUS_VIDEOS}"
        ))
        .into());
    }
    Ok(())
}

/// Scores every video of every corpus and evaluates seeded 8:2 splits.
pub fn run_benchmark(
    config: &BenchConfig,
    seed: u64,
    log: &mut dyn FnMut(&str),
) -> Result<BenchmarkReport> {
    check_repeats(config.repeats)?;
    if config.corpora.is_empty() {
        return Err(Error::Missing("corpora in benchmark config".into()));
    }
    let detectors = Detectors::load(&config.models)?;
    let seeds = split_seeds(seed, config.repeats);
    let mut results = Vec::with_capacity(config.corpora.len());
    for path in &config.corpora {
        let db = load_database(path)?;
        check_size(&db.name, db.videos.len())?;
        let base = base_dir(path);
        let mut videos = Vec::with_capacity(db.videos.len());
        for v in &db.videos {
            log(&format!("scoring {}/{}", db.name, v.id));
            let seq = db.read_video(&base, v)?;
            let detail = video_intensities(&seq, &detectors, &config.pipeline, false)?;
            videos.push(VideoRecord {
                id: v.id.clone(),
                score: v.score,
                intensities: detail.intensities,
            });
        }
        results.push(evaluate_corpus(
            &db.name,
            db.score_kind,
            videos,
            config.svr,
            &seeds,
            config.logistic,
        )?);
    }
    BenchmarkReport::new(
        config_digest(config)?,
        Seeds {
            master: seed,
            splits: seeds,
        },
        config.logistic,
        results,
        vec![],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyStage {
    pub net: SaliencyNetConfig,
    pub train: SaliencyTrainOptions,
    pub corpus: CorpusConfig,
    /// Every `frame_stride`-th frame of each item becomes a sample.
    pub frame_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialStage {
    pub detector: SpatialDetectorConfig,
    pub fit: FitOptions,
    /// Its `kinds` are replaced by the kind being trained.
    pub corpus: CorpusConfig,
    pub frame_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalStage {
    pub detector: TemporalDetectorConfig,
    pub fit: FitOptions,
    pub corpus: CorpusConfig,
}

/// Everything the synthetic end-to-end benchmark trains and evaluates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticConfig {
    pub saliency: SaliencyStage,
    pub spatial: SpatialStage,
    pub temporal: TemporalStage,
    /// Scored videos; the ensemble is trained and tested on their pseudo-MOS.
    pub eval: CorpusConfig,
    pub repeats: usize,
    pub svr: SvrParams,
    pub pipeline: PipelineConfig,
    pub logistic: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        let base = CorpusConfig::default();
        let binary = CorpusConfig {
            strengths: vec![0.0, 1.0],
            ..base.clone()
        };
        SyntheticConfig {
            saliency: SaliencyStage {
                net: SaliencyNetConfig::default(),
                train: SaliencyTrainOptions {
                    epochs: 20,
                    lr: 2e-3,
                    batch_size: 8,
                },
                corpus: CorpusConfig {
                    frames: 8,
                    repeats: 6,
                    ..binary.clone()
                },
                frame_stride: 4,
            },
            spatial: SpatialStage {
                detector: SpatialDetectorConfig::default(),
                fit: FitOptions {
                    epochs: 30,
                    lr: 3e-3,
                    batch_size: 16,
                },
                corpus: CorpusConfig {
                    frames: 1,
                    repeats: 50,
                    ..binary.clone()
                },
                frame_stride: 1,
            },
            temporal: TemporalStage {
                detector: TemporalDetectorConfig::default(),
                fit: FitOptions {
                    epochs: 25,
                    lr: 1e-3,
                    batch_size: 8,
                },
                corpus: CorpusConfig {
                    strengths: vec![0.0, 0.5, 1.0],
                    repeats: 60,
                    ..base.clone()
                },
            },
            eval: CorpusConfig { repeats: 4, ..base },
            repeats: 1,
            svr: SvrParams::default(),
            pipeline: PipelineConfig::default(),
            logistic: false,
        }
    }
}

/// Trained models plus the report of one synthetic run.
#[derive(Debug, Clone)]
pub struct SyntheticOutcome {
    pub report: BenchmarkReport,
    pub detectors: Detectors,
    pub eval: LabeledCorpus,
}

/// Stream labels for the independent corpora of one run.
pub mod streams {
    pub const SALIENCY: u64 = 0x5a1;
    pub const SPATIAL: u64 = 0x5a7;
    pub const TEMPORAL: u64 = 0x7e3;
    pub const EVAL: u64 = 0xe7a;
}

pub fn saliency_samples(
    corpus: &LabeledCorpus,
    frame_stride: usize,
) -> Result<Vec<SaliencySample>> {
    let mut out = Vec::new();
    for item in &corpus.items {
        for (frame, mask) in item
            .video
            .frames()
            .iter()
            .zip(&item.clean.masks)
            .step_by(frame_stride.max(1))
        {
            out.push(SaliencySample::new(luma_unit(frame), mask.clone())?);
        }
    }
    Ok(out)
}

pub fn train_detectors(
    config: &SyntheticConfig,
    seed: u64,
    log: &mut dyn FnMut(&str),
) -> Result<Detectors> {
    let s = &config.saliency;
    log("training saliency network");
    let corpus = synth_corpus(&s.corpus, mix(seed, streams::SALIENCY))?;
    let samples = saliency_samples(&corpus, s.frame_stride)?;
    let saliency =
        saliency::train(&samples, &s.net, &s.train, mix(seed, streams::SALIENCY + 1))?.net;

    let mut spatial = Vec::with_capacity(4);
    for kind in PeaKind::SPATIAL {
        log(&format!("training {kind} detector"));
        let cfg = CorpusConfig {
            kinds: vec![kind],
            ..config.spatial.corpus.clone()
        };
        let corpus = synth_corpus(&cfg, mix(seed, streams::SPATIAL + kind.index() as u64))?;
        let patches = corpus.patches(kind, config.spatial.frame_stride)?;
        let trained = train_detector(
            &patches,
            kind,
            &config.spatial.detector,
            config.spatial.fit,
            mix(seed, streams::SPATIAL),
        )?;
        spatial.push(trained.detector);
    }
    let mut temporal = Vec::with_capacity(2);
    for kind in PeaKind::TEMPORAL {
        log(&format!("training {kind} detector"));
        let cfg = CorpusConfig {
            kinds: vec![kind],
            ..config.temporal.corpus.clone()
        };
        let corpus = synth_corpus(&cfg, mix(seed, streams::TEMPORAL + kind.index() as u64))?;
        let clips = corpus.clips(kind, config.temporal.detector.n_t)?;
        let trained = train_temporal(
            &clips,
            kind,
            &config.temporal.detector,
            config.temporal.fit,
            mix(seed, streams::TEMPORAL),
        )?;
        temporal.push(trained.detector);
    }
    Ok(Detectors {
        saliency,
        spatial,
        temporal,
    })
}

/// Clean versus strength-1 mean intensity of each kind on its own eval items.
pub fn detector_gaps(corpus: &LabeledCorpus, videos: &[VideoRecord]) -> Vec<DetectorGap> {
    let mut out = Vec::new();
    for &kind in &corpus.config.kinds {
        let mean_at = |s: f64| {
            let v: Vec<f64> = corpus
                .items
                .iter()
                .zip(videos)
                .filter(|(it, _)| it.recipe.kind == kind && it.recipe.strength == s)
                .map(|(_, v)| v.intensities.get(kind))
                .collect();
            (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
        };
        if let (Some(clean), Some(strongest)) = (mean_at(0.0), mean_at(1.0)) {
            out.push(DetectorGap {
                kind,
                clean,
                strongest,
                gap: strongest - clean,
            });
        }
    }
    out
}

/// Trains all models on generated corpora, then benchmarks them on a separate generated corpus.
pub fn run_synthetic(
    config: &SyntheticConfig,
    seed: u64,
    log: &mut dyn FnMut(&str),
) -> Result<SyntheticOutcome> {
    check_repeats(config.repeats)?;
    let detectors = train_detectors(config, seed, log)?;
    let eval = synth_corpus(&config.eval, mix(seed, streams::EVAL))?;
    check_size("synthetic", eval.items.len())?;
    let mut videos = Vec::with_capacity(eval.items.len());
    for item in &eval.items {
        log(&format!("scoring {}", item.id));
        let detail = video_intensities(&item.video, &detectors, &config.pipeline, false)?;
        videos.push(VideoRecord {
            id: item.id.clone(),
            score: item.pseudo_mos,
            intensities: detail.intensities,
        });
    }
    let gaps = detector_gaps(&eval, &videos);
    let seeds = split_seeds(seed, config.repeats);
    let corpus = evaluate_corpus(
        "synthetic",
        ScoreKind::Mos,
        videos,
        config.svr,
        &seeds,
        config.logistic,
    )?;
    let report = BenchmarkReport::new(
        config_digest(config)?,
        Seeds {
            master: seed,
            splits: seeds,
        },
        config.logistic,
        vec![corpus],
        gaps,
    )?;
    Ok(SyntheticOutcome {
        report,
        detectors,
        eval,
    })
}
