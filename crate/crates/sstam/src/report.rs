//! The versioned benchmark report, its per-corpus evaluation and schema validation.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sstam_core::metrics::{fit_logistic, plcc, srcc, weighted_overall};
use sstam_core::quality::{
    build_dataset, split_8_2, train_ensemble, PeaIntensityVector, QualityDataset, ScoreKind,
    SvrParams,
};
use sstam_core::rng::mix;
use sstam_core::synth::PeaKind;

use crate::error::{malformed, Result};

pub const SCHEMA: &str = "sstam-benchmark";
pub const VERSION: u32 = 1;

/// Hex SHA-256 of the compact JSON encoding of `config`.
pub fn config_digest<T: Serialize>(config: &T) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VideoRecord {
    pub id: String,
    /// Subjective score as given (MOS, DMOS or pseudo-MOS).
    pub score: f64,
    pub intensities: PeaIntensityVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestPrediction {
    pub id: String,
    pub predicted: f64,
    /// Score on the higher-is-better axis.
    pub oriented: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitResult {
    pub seed: u64,
    pub train: usize,
    pub plcc: f64,
    pub srcc: f64,
    pub selected: Vec<usize>,
    pub weights: Vec<f64>,
    pub test: Vec<TestPrediction>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusResult {
    pub name: String,
    pub score_kind: ScoreKind,
    /// `identity` for MOS; `negated` for DMOS, whose scores are negated before correlation.
    pub orientation: String,
    pub videos: Vec<VideoRecord>,
    /// Median over splits.
    pub plcc: f64,
    pub srcc: f64,
    pub splits: Vec<SplitResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overall {
    /// Corpus sizes used as weights.
    pub counts: Vec<usize>,
    pub plcc: f64,
    pub srcc: f64,
}

/// Mean intensity of clean and strength-1 items for one detector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorGap {
    pub kind: PeaKind,
    pub clean: f64,
    pub strongest: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub master: u64,
    pub splits: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub schema: String,
    pub version: u32,
    pub config_digest: String,
    pub seeds: Seeds,
    /// Predictions pass through a fitted logistic before PLCC.
    pub logistic: bool,
    pub corpora: Vec<CorpusResult>,
    pub overall: Overall,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub detectors: Vec<DetectorGap>,
}

pub fn split_seeds(master: u64, repeats: usize) -> Vec<u64> {
    (0..repeats as u64)
        .map(|r| mix(master, 0x5b17 + r))
        .collect()
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// One seeded 8:2 split: train the ensemble, correlate its test predictions with the oriented scores.
pub fn evaluate_split(
    data: &QualityDataset,
    ids: &[String],
    params: SvrParams,
    seed: u64,
    logistic: bool,
) -> Result<SplitResult> {
    let mut tagged = data.clone();
    for (r, id) in tagged.records.iter_mut().zip(ids) {
        r.source = id.clone();
    }
    let (train, test) = split_8_2(&tagged, seed)?;
    let ensemble = train_ensemble(&train, params, mix(seed, 1))?;
    let predicted: Vec<f64> = test
        .records
        .iter()
        .map(|r| ensemble.predict(&r.intensities))
        .collect();
    let oriented = test.oriented_scores();
    let mapped = if logistic {
        let f = fit_logistic(&predicted, &oriented)?;
        predicted.iter().map(|&x| f.eval(x)).collect()
    } else {
        predicted.clone()
    };
    Ok(SplitResult {
        seed,
        train: train.len(),
        plcc: plcc(&mapped, &oriented)?,
        srcc: srcc(&predicted, &oriented)?,
        selected: ensemble.selected.clone(),
        weights: ensemble.weights.clone(),
        test: test
            .records
            .iter()
            .zip(predicted.iter().zip(&oriented))
            .map(|(r, (&p, &o))| TestPrediction {
                id: r.source.clone(),
                predicted: p,
                oriented: o,
            })
            .collect(),
    })
}

pub fn evaluate_corpus(
    name: &str,
    score_kind: ScoreKind,
    videos: Vec<VideoRecord>,
    params: SvrParams,
    seeds: &[u64],
    logistic: bool,
) -> Result<CorpusResult> {
    let xs: Vec<PeaIntensityVector> = videos.iter().map(|v| v.intensities).collect();
    let ys: Vec<f64> = videos.iter().map(|v| v.score).collect();
    let ids: Vec<String> = videos.iter().map(|v| v.id.clone()).collect();
    let data = build_dataset(&xs, &ys, score_kind)?;
    let splits = seeds
        .iter()
        .map(|&s| evaluate_split(&data, &ids, params, s, logistic))
        .collect::<Result<Vec<_>>>()?;
    let p: Vec<f64> = splits.iter().map(|s| s.plcc).collect();
    let r: Vec<f64> = splits.iter().map(|s| s.srcc).collect();
    Ok(CorpusResult {
        name: name.to_string(),
        score_kind,
        orientation: match score_kind {
            ScoreKind::Mos => "identity",
            ScoreKind::Dmos => "negated",
        }
        .to_string(),
        videos,
        plcc: median(&p),
        srcc: median(&r),
        splits,
    })
}

pub fn overall(corpora: &[CorpusResult]) -> Result<Overall> {
    let counts: Vec<usize> = corpora.iter().map(|c| c.videos.len()).collect();
    let p: Vec<Option<f64>> = corpora.iter().map(|c| Some(c.plcc)).collect();
    let s: Vec<Option<f64>> = corpora.iter().map(|c| Some(c.srcc)).collect();
    Ok(Overall {
        plcc: weighted_overall(&p, &counts)?,
        srcc: weighted_overall(&s, &counts)?,
        counts,
    })
}

impl BenchmarkReport {
    pub fn new(
        config_digest: String,
        seeds: Seeds,
        logistic: bool,
        corpora: Vec<CorpusResult>,
        detectors: Vec<DetectorGap>,
    ) -> Result<Self> {
        let overall = overall(&corpora)?;
        Ok(BenchmarkReport {
            schema: SCHEMA.to_string(),
            version: VERSION,
            config_digest,
            seeds,
            logistic,
            corpora,
            overall,
            detectors,
        })
    }

    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn field<'a>(obj: &'a serde_json::Value, key: &str, at: &str) -> Result<&'a serde_json::Value> {
    obj.get(key)
        .ok_or_else(|| malformed("report", format!("{at}: missing `{key}`")))
}

fn number(obj: &serde_json::Value, key: &str, at: &str) -> Result<f64> {
    field(obj, key, at)?
        .as_f64()
        .ok_or_else(|| malformed("report", format!("{at}.{key}: not a number")))
}

fn correlation(obj: &serde_json::Value, key: &str, at: &str) -> Result<f64> {
    let v = number(obj, key, at)?;
    if !(-1.0..=1.0).contains(&v) {
        return Err(malformed(
            "report",
            format!("{at}.{key} = {v} outside [-1, 1]"),
        ));
    }
    Ok(v)
}

/// Structural and consistency checks on a serialized report.
pub fn validate_report(json: &str) -> Result<BenchmarkReport> {
    let value: serde_json::Value = serde_json::from_str(json)?;
    if field(&value, "schema", "report")?.as_str() != Some(SCHEMA) {
        return Err(malformed("report", format!("schema is not {SCHEMA:?}")));
    }
    if field(&value, "version", "report")?.as_u64() != Some(VERSION as u64) {
        return Err(malformed(
            "report",
            format!("unsupported version (expected {VERSION})"),
        ));
    }
    let digest = field(&value, "config_digest", "report")?
        .as_str()
        .unwrap_or("");
    if digest.len() != 64 || !digest.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(malformed(
            "report",
            "config_digest is not a SHA-256 hex string",
        ));
    }
    let corpora = field(&value, "corpora", "report")?
        .as_array()
        .filter(|a| !a.is_empty())
        .ok_or_else(|| malformed("report", "corpora must be a non-empty array"))?;
    for (i, c) in corpora.iter().enumerate() {
        let at = format!("corpora[{i}]");
        correlation(c, "plcc", &at)?;
        correlation(c, "srcc", &at)?;
        for (j, s) in field(c, "splits", &at)?
            .as_array()
            .into_iter()
            .flatten()
            .enumerate()
        {
            correlation(s, "plcc", &format!("{at}.splits[{j}]"))?;
            correlation(s, "srcc", &format!("{at}.splits[{j}]"))?;
        }
    }
    let total = field(&value, "overall", "report")?;
    correlation(total, "plcc", "overall")?;
    correlation(total, "srcc", "overall")?;
    let report: BenchmarkReport = serde_json::from_value(value)?;
    let seeds_ok = report.corpora.iter().all(|c| {
        c.splits.len() == report.seeds.splits.len()
            && c.splits
                .iter()
                .zip(&report.seeds.splits)
                .all(|(s, &k)| s.seed == k)
    });
    if !seeds_ok {
        return Err(malformed(
            "report",
            "split seeds disagree with the seeds block",
        ));
    }
    let recomputed = overall(&report.corpora)?;
    if recomputed.counts != report.overall.counts
        || (recomputed.plcc - report.overall.plcc).abs() > 1e-12
        || (recomputed.srcc - report.overall.srcc).abs() > 1e-12
    {
        return Err(malformed(
            "report",
            "overall is not the count-weighted mean of the corpora",
        ));
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn videos(n: usize) -> Vec<VideoRecord> {
        (0..n)
            .map(|i| {
                let t = i as f64 / (n - 1) as f64;
                let s = (i * 7 % n) as f64 / n as f64;
                VideoRecord {
                    id: format!("v{i:02}"),
                    score: 90.0 - 60.0 * t - 10.0 * s,
                    intensities: PeaIntensityVector::new([t, s, 0.1, 0.0, 0.5 * t, 0.0]).unwrap(),
                }
            })
            .collect()
    }

    fn report() -> BenchmarkReport {
        let seeds = split_seeds(3, 3);
        let a = evaluate_corpus(
            "a",
            ScoreKind::Mos,
            videos(60),
            SvrParams::default(),
            &seeds,
            false,
        )
        .unwrap();
        let mut dm = videos(50);
        for v in &mut dm {
            v.score = 100.0 - v.score;
        }
        let b = evaluate_corpus(
            "b",
            ScoreKind::Dmos,
            dm,
            SvrParams::default(),
            &seeds,
            false,
        )
        .unwrap();
        BenchmarkReport::new(
            config_digest(&"cfg").unwrap(),
            Seeds {
                master: 3,
                splits: seeds,
            },
            false,
            vec![a, b],
            vec![],
        )
        .unwrap()
    }

    #[test]
    fn report_is_consistent_and_validates() {
        let r = report();
        assert_eq!(r.overall.counts, vec![60, 50]);
        let expect = (r.corpora[0].plcc * 60.0 + r.corpora[1].plcc * 50.0) / 110.0;
        assert!((r.overall.plcc - expect).abs() < 1e-12);
        assert!(
            r.corpora.iter().all(|c| c.srcc > 0.8),
            "{:?}",
            r.corpora.iter().map(|c| c.srcc).collect::<Vec<_>>()
        );
        assert_eq!(r.corpora[1].orientation, "negated");
        assert_eq!(r.corpora[0].splits[0].test.len(), 12);
        let json = r.to_json().unwrap();
        assert_eq!(validate_report(&json).unwrap(), r);
        assert_eq!(json, report().to_json().unwrap());
    }

    #[test]
    fn validation_rejects_tampering() {
        let json = report().to_json().unwrap();
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["overall"]["plcc"] = serde_json::json!(0.1);
        assert!(validate_report(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["version"] = serde_json::json!(99);
        assert!(validate_report(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v["corpora"][0]["srcc"] = serde_json::json!(1.5);
        assert!(validate_report(&v.to_string()).is_err());
        let mut v: serde_json::Value = serde_json::from_str(&json).unwrap();
        v.as_object_mut().unwrap().remove("config_digest");
        assert!(validate_report(&v.to_string()).is_err());
    }

    #[test]
    fn medians_and_digests() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(
            config_digest(&serde_json::json!({})).unwrap(),
            "44136fa355b3678a1146ad16f7e8649e94fb4fc21fe77e8310c060f61caaff8a"
        );
    }
}
