use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sstam_core::optim::FitOptions;
use sstam_core::quality::{build_dataset, train_ensemble, PeaIntensityVector, SvrParams};
use sstam_core::rng::mix;
use sstam_core::saliency::{self, SaliencyNetConfig, SaliencyTrainOptions};
use sstam_core::spatial::{train_detector, SpatialDetectorConfig};
use sstam_core::synth::{synth_corpus, CorpusConfig, PeaKind};
use sstam_core::temporal::{train_temporal, TemporalDetectorConfig};

use sstam::bench::{run_benchmark, run_synthetic, BenchConfig, SyntheticConfig};
use sstam::error::{read_file, write_file, Error, Result};
use sstam::manifest::{
    base_dir, load_database, read_json, write_saliency_pairs, write_synth_corpus, SaliencyManifest,
    SynthManifest,
};
use sstam::models::{
    detector_file, load_ensemble, save_ensemble, save_model, Detectors, SALIENCY_FILE,
};
use sstam::pipeline::{score_video, video_intensities, PipelineConfig};
use sstam::y4m::parse_y4m;
use sstam::yuv::read_raw_yuv420;

#[derive(Parser)]
#[command(
    name = "sstam",
    version,
    about = "No-reference compressed-video quality assessment"
)]
struct Cli {
    /// Master seed for every stochastic step.
    #[arg(long, global = true, default_value_t = 7)]
    seed: u64,
    /// JSON configuration for the command.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Progress on stderr and per-frame detail in outputs.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic corpus (Y4M videos, PGM masks, manifests).
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Write every n-th frame as a saliency training pair.
        #[arg(long, default_value_t = 4)]
        saliency_stride: usize,
    },
    /// Train the saliency network from a PGM pair manifest.
    TrainSaliency {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train spatial detectors from a synthetic corpus manifest.
    TrainSpatial {
        #[arg(long)]
        corpus: PathBuf,
        /// One spatial kind, or every spatial kind when omitted.
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train temporal detectors from a synthetic corpus manifest.
    TrainTemporal {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        kind: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score every video of a database manifest and fit the quality ensemble on all of them.
    TrainQuality {
        #[arg(long)]
        database: PathBuf,
        #[arg(long)]
        models: PathBuf,
    },
    /// Emit the six intensities and the predicted quality of one video as JSON.
    Score {
        video: PathBuf,
        #[arg(long)]
        models: PathBuf,
        /// Geometry of a headerless I420 input, e.g. 832x480.
        #[arg(long)]
        raw: Option<String>,
        #[arg(long, default_value = "25:1")]
        fps: String,
    },
    /// Run the benchmark and emit its report as JSON.
    Bench {
        /// Train everything on generated corpora and evaluate on a generated corpus.
        #[arg(long)]
        synthetic: bool,
        /// Seeded 8:2 splits per corpus (median reported).
        #[arg(long)]
        repeats: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where a synthetic run stores its trained models.
        #[arg(long)]
        save_models: Option<PathBuf>,
    },
    /// Recompute the Overall columns of the published comparison tables.
    Tables {
        #[arg(long)]
        json: bool,
    },
}

fn config_or_default<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> Result<T> {
    match path {
        Some(p) => read_json(p),
        None => Ok(T::default()),
    }
}

fn parse_kind(name: &str, temporal: bool) -> Result<PeaKind> {
    match PeaKind::from_name(name) {
        Some(k) if k.is_temporal() == temporal => Ok(k),
        _ => Err(Error::Missing(format!(
            "{} kind named {name:?}",
            if temporal { "temporal" } else { "spatial" }
        ))),
    }
}

fn kinds(kind: &Option<String>, temporal: bool) -> Result<Vec<PeaKind>> {
    match kind {
        Some(k) => Ok(vec![parse_kind(k, temporal)?]),
        None if temporal => Ok(PeaKind::TEMPORAL.to_vec()),
        None => Ok(PeaKind::SPATIAL.to_vec()),
    }
}

fn parse_ratio(s: &str, sep: char, what: &'static str) -> Result<(usize, usize)> {
    let bad = || Error::Malformed {
        what,
        detail: s.to_string(),
    };
    let (a, b) = s.split_once(sep).ok_or_else(bad)?;
    Ok((a.parse().map_err(|_| bad())?, b.parse().map_err(|_| bad())?))
}

fn emit(text: &str, out: &Option<PathBuf>) -> Result<()> {
    match out {
        Some(p) => write_file(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct SaliencyJob {
    net: SaliencyNetConfig,
    train: SaliencyTrainOptions,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct SpatialJob {
    detector: SpatialDetectorConfig,
    fit: FitOptions,
    frame_stride: usize,
}

impl Default for SpatialJob {
    fn default() -> Self {
        let s = SyntheticConfig::default().spatial;
        SpatialJob {
            detector: s.detector,
            fit: s.fit,
            frame_stride: s.frame_stride,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
struct TemporalJob {
    detector: TemporalDetectorConfig,
    fit: FitOptions,
}

impl Default for TemporalJob {
    fn default() -> Self {
        let t = SyntheticConfig::default().temporal;
        TemporalJob {
            detector: t.detector,
            fit: t.fit,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
struct QualityJob {
    svr: SvrParams,
    pipeline: PipelineConfig,
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let verbose = cli.verbose;
    let mut log = |msg: &str| {
        if verbose {
            eprintln!("{msg}");
        }
    };
    match cli.command {
        Command::Synth {
            out,
            saliency_stride,
        } => {
            let config: CorpusConfig = config_or_default(&cli.config)?;
            let corpus = synth_corpus(&config, seed)?;
            let manifest = write_synth_corpus(&out, &corpus, seed)?;
            let pairs = write_saliency_pairs(&out, &corpus, saliency_stride)?;
            log(&format!(
                "{} videos, {} saliency pairs in {}",
                manifest.items.len(),
                pairs.pairs.len(),
                out.display()
            ));
        }
        Command::TrainSaliency { manifest, out } => {
            let job: SaliencyJob = config_or_default(&cli.config)?;
            let pairs: SaliencyManifest = read_json(&manifest)?;
            let samples = pairs.load_samples(&base_dir(&manifest))?;
            log(&format!("training saliency on {} pairs", samples.len()));
            let trained = saliency::train(&samples, &job.net, &job.train, seed)?;
            log(&format!(
                "final epoch loss {:.6}",
                trained.epoch_losses.last().copied().unwrap_or(f64::NAN)
            ));
            save_model(&out, SALIENCY_FILE, &trained.net, seed)?;
        }
        Command::TrainSpatial { corpus, kind, out } => {
            let job: SpatialJob = config_or_default(&cli.config)?;
            let manifest: SynthManifest = read_json(&corpus)?;
            for k in kinds(&kind, false)? {
                let patches = manifest.patches(
                    &base_dir(&corpus),
                    k,
                    job.frame_stride,
                    job.detector.patch_side,
                )?;
                log(&format!("training {k} on {} patches", patches.len()));
                let trained = train_detector(&patches, k, &job.detector, job.fit, seed)?;
                log(&format!(
                    "{k}: training accuracy {:.4}",
                    trained.detector.accuracy(&patches)?
                ));
                save_model(&out, &detector_file(k), &trained.detector, seed)?;
            }
        }
        Command::TrainTemporal { corpus, kind, out } => {
            let job: TemporalJob = config_or_default(&cli.config)?;
            let manifest: SynthManifest = read_json(&corpus)?;
            for k in kinds(&kind, true)? {
                let clips = manifest.clips(&base_dir(&corpus), k, job.detector.n_t)?;
                log(&format!("training {k} on {} clips", clips.len()));
                let trained = train_temporal(&clips, k, &job.detector, job.fit, seed)?;
                log(&format!(
                    "{k}: training accuracy {:.4}",
                    trained.detector.accuracy(&clips)?
                ));
                save_model(&out, &detector_file(k), &trained.detector, seed)?;
            }
        }
        Command::TrainQuality { database, models } => {
            let job: QualityJob = config_or_default(&cli.config)?;
            let detectors = Detectors::load(&models)?;
            let db = load_database(&database)?;
            let base = base_dir(&database);
            let mut xs: Vec<PeaIntensityVector> = Vec::with_capacity(db.videos.len());
            for v in &db.videos {
                log(&format!("scoring {}", v.id));
                xs.push(
                    video_intensities(&db.read_video(&base, v)?, &detectors, &job.pipeline, false)?
                        .intensities,
                );
            }
            let scores: Vec<f64> = db.videos.iter().map(|v| v.score).collect();
            let data = build_dataset(&xs, &scores, db.score_kind)?;
            let ensemble = train_ensemble(&data, job.svr, mix(seed, 1))?;
            let path = save_ensemble(&models, &ensemble)?;
            log(&format!(
                "selected learners {:?}, weights written to {}",
                ensemble.selected,
                path.display()
            ));
        }
        Command::Score {
            video,
            models,
            raw,
            fps,
        } => {
            let pipeline: PipelineConfig = config_or_default(&cli.config)?;
            let bytes = read_file(&video)?;
            let (n, d) = parse_ratio(&fps, ':', "frame rate")?;
            let seq = match raw {
                Some(g) => {
                    let (w, h) = parse_ratio(&g, 'x', "raw geometry")?;
                    read_raw_yuv420(&bytes, w, h, (n as u32, d as u32))?
                }
                None => parse_y4m(&bytes)?,
            };
            let detectors = Detectors::load(&models)?;
            let ensemble = load_ensemble(&models)?;
            let score = score_video(&seq, &detectors, &ensemble, &pipeline, verbose)?;
            println!("{}", serde_json::to_string_pretty(&score)?);
        }
        Command::Bench {
            synthetic,
            repeats,
            out,
            save_models,
        } => {
            let report = if synthetic {
                let mut config: SyntheticConfig = config_or_default(&cli.config)?;
                config.repeats = repeats.unwrap_or(config.repeats);
                let outcome = run_synthetic(&config, seed, &mut log)?;
                if let Some(dir) = save_models {
                    outcome.detectors.save(&dir, seed)?;
                }
                outcome.report
            } else {
                let path = cli.config.as_ref().ok_or_else(|| {
                    Error::Missing("--config naming the benchmark corpora".into())
                })?;
                let mut config: BenchConfig = read_json(path)?;
                config.repeats = repeats.unwrap_or(config.repeats);
                resolve_relative(&mut config, path);
                run_benchmark(&config, seed, &mut log)?
            };
            emit(&report.to_json()?, &out)?;
        }
        Command::Tables { json } => {
            let checks = sstam::tables::bundled().recompute()?;
            if json {
                println!("{}", serde_json::to_string_pretty(&checks)?);
            } else {
                println!(
                    "{:<6} {:<10} {:>9} {:>11}  match",
                    "metric", "method", "published", "recomputed"
                );
                for c in &checks {
                    println!(
                        "{:<6} {:<10} {:>9.4} {:>11.6}  {}",
                        c.metric, c.method, c.published, c.recomputed, c.matches
                    );
                }
            }
            if checks.iter().any(|c| !c.matches) {
                return Err(Error::Malformed {
                    what: "tables",
                    detail: "an Overall entry does not reproduce".into(),
                });
            }
        }
    }
    Ok(())
}

/// Paths in a benchmark config are relative to the config file.
fn resolve_relative(config: &mut BenchConfig, config_path: &Path) {
    let base = base_dir(config_path);
    if config.models.is_relative() {
        config.models = base.join(&config.models);
    }
    for c in &mut config.corpora {
        if c.is_relative() {
            *c = base.join(&*c);
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
