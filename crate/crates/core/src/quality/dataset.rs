use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use crate::error::{invalid, shape_err, Error, Result};
use crate::rng::derive;
use crate::synth::PeaKind;

/// The six artifact intensities in fixed order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PeaIntensityVector {
    pub blocking: f64,
    pub blurring: f64,
    pub color_bleeding: f64,
    pub ringing: f64,
    pub flickering: f64,
    pub floating: f64,
}

impl PeaIntensityVector {
    pub fn new(values: [f64; 6]) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(invalid!(
                "{} intensity {} outside [0,1]",
                PeaKind::ALL[i],
                values[i]
            ));
        }
        let [blocking, blurring, color_bleeding, ringing, flickering, floating] = values;
        Ok(PeaIntensityVector {
            blocking,
            blurring,
            color_bleeding,
            ringing,
            flickering,
            floating,
        })
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.blocking,
            self.blurring,
            self.color_bleeding,
            self.ringing,
            self.flickering,
            self.floating,
        ]
    }

    pub fn get(&self, kind: PeaKind) -> f64 {
        self.to_array()[kind.index()]
    }

    pub fn set(&mut self, kind: PeaKind, value: f64) -> Result<()> {
        let mut a = self.to_array();
        a[kind.index()] = value;
        *self = Self::new(a)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum ScoreKind {
    /// Higher is better.
    Mos,
    /// Lower is better.
    Dmos,
}

impl ScoreKind {
    /// Maps a raw score onto the higher-is-better axis.
    pub fn orient(self, score: f64) -> f64 {
        match self {
            ScoreKind::Mos => score,
            ScoreKind::Dmos => -score,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QualityRecord {
    pub intensities: PeaIntensityVector,
    pub score: f64,
    pub source: String,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QualityDataset {
    pub kind: ScoreKind,
    pub records: Vec<QualityRecord>,
}

/// Fewest records the ensemble accepts (one per learner).
pub const MIN_ENSEMBLE_RECORDS: usize = 10;

impl QualityDataset {
    pub fn new(kind: ScoreKind) -> Self {
        QualityDataset {
            kind,
            records: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn push(&mut self, record: QualityRecord) -> Result<()> {
        if !record.score.is_finite() {
            return Err(Error::NonFinite("quality score"));
        }
        self.records.push(record);
        Ok(())
    }

    /// Appends another dataset of the same score kind.
    pub fn extend(&mut self, other: QualityDataset) -> Result<()> {
        if other.kind != self.kind {
            return Err(invalid!(
                "cannot mix {:?} and {:?} scores",
                self.kind,
                other.kind
            ));
        }
        self.records.extend(other.records);
        Ok(())
    }

    pub fn inputs(&self) -> Vec<Vec<f64>> {
        self.records
            .iter()
            .map(|r| r.intensities.to_array().to_vec())
            .collect()
    }

    /// Scores on the higher-is-better axis (DMOS negated).
    pub fn oriented_scores(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| self.kind.orient(r.score))
            .collect()
    }

    fn subset(&self, idx: &[usize]) -> QualityDataset {
        QualityDataset {
            kind: self.kind,
            records: idx.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    fn shuffled(&self, seed: u64, stream: u64) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut derive(seed, stream));
        order
    }
}

/// Pairs vectors and scores positionally; sources are the positions.
pub fn build_dataset(
    intensities: &[PeaIntensityVector],
    scores: &[f64],
    kind: ScoreKind,
) -> Result<QualityDataset> {
    if intensities.len() != scores.len() {
        return Err(shape_err!(
            "{} intensity vectors for {} scores",
            intensities.len(),
            scores.len()
        ));
    }
    let mut d = QualityDataset::new(kind);
    for (i, (v, &s)) in intensities.iter().zip(scores).enumerate() {
        d.push(QualityRecord {
            intensities: *v,
            score: s,
            source: format!("{i}"),
        })?;
    }
    Ok(d)
}

/// Seeded shuffle; the first `⌈0.8·m⌉` records train, the rest test.
pub fn split_8_2(data: &QualityDataset, seed: u64) -> Result<(QualityDataset, QualityDataset)> {
    if data.len() < 5 {
        return Err(invalid!(
            "8:2 split needs at least 5 records, got {}",
            data.len()
        ));
    }
    let order = data.shuffled(seed, 0x82);
    let cut = (data.len() * 8).div_ceil(10);
    Ok((data.subset(&order[..cut]), data.subset(&order[cut..])))
}

/// Seeded shuffle, then round-robin into ten subsets whose sizes differ by at most one.
pub fn partition_10(train: &QualityDataset, seed: u64) -> Result<Vec<QualityDataset>> {
    if train.len() < MIN_ENSEMBLE_RECORDS {
        return Err(invalid!(
            "ten subsets need at least 10 records, got {}",
            train.len()
        ));
    }
    let order = train.shuffled(seed, 0x10);
    let mut parts: Vec<Vec<usize>> = (0..10).map(|_| Vec::new()).collect();
    for (k, &i) in order.iter().enumerate() {
        parts[k % 10].push(i);
    }
    Ok(parts.iter().map(|p| train.subset(p)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn data(n: usize) -> QualityDataset {
        let v: Vec<PeaIntensityVector> = (0..n)
            .map(|i| PeaIntensityVector::new([(i % 11) as f64 / 10.0; 6]).unwrap())
            .collect();
        let s: Vec<f64> = (0..n).map(|i| i as f64).collect();
        build_dataset(&v, &s, ScoreKind::Mos).unwrap()
    }

    #[test]
    fn build_examples() {
        assert_eq!(data(3).len(), 3);
        assert!(build_dataset(&[], &[], ScoreKind::Dmos).unwrap().is_empty());
        assert!(build_dataset(&[PeaIntensityVector::default()], &[], ScoreKind::Mos).is_err());
        assert!(build_dataset(
            &[PeaIntensityVector::default()],
            &[f64::NAN],
            ScoreKind::Mos
        )
        .is_err());
        let mut a = data(2);
        assert!(a.extend(QualityDataset::new(ScoreKind::Dmos)).is_err());
        assert!(PeaIntensityVector::new([0.0, 0.0, 1.5, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn dmos_is_negated() {
        let d = build_dataset(
            &[PeaIntensityVector::default(); 2],
            &[30.0, 10.0],
            ScoreKind::Dmos,
        )
        .unwrap();
        assert_eq!(d.oriented_scores(), vec![-30.0, -10.0]);
    }

    #[test]
    fn split_sizes() {
        for (m, tr) in [(100, 80), (10, 8), (5, 4), (11, 9)] {
            let (a, b) = split_8_2(&data(m), 1).unwrap();
            assert_eq!((a.len(), b.len()), (tr, m - tr));
            let mut all: Vec<f64> = a
                .records
                .iter()
                .chain(&b.records)
                .map(|r| r.score)
                .collect();
            all.sort_by(f64::total_cmp);
            assert_eq!(all, (0..m).map(|i| i as f64).collect::<Vec<_>>());
        }
        assert!(split_8_2(&data(4), 1).is_err());
        assert_eq!(split_8_2(&data(50), 7), split_8_2(&data(50), 7));
        assert_ne!(split_8_2(&data(50), 7), split_8_2(&data(50), 8));
    }

    #[test]
    fn partition_sizes() {
        let p = partition_10(&data(80), 3).unwrap();
        assert!(p.iter().all(|s| s.len() == 8));
        let p = partition_10(&data(83), 3).unwrap();
        let mut sizes: Vec<usize> = p.iter().map(|s| s.len()).collect();
        sizes.sort();
        assert_eq!(sizes, vec![8, 8, 8, 8, 8, 8, 8, 9, 9, 9]);
        let mut all: Vec<f64> = p
            .iter()
            .flat_map(|s| s.records.iter().map(|r| r.score))
            .collect();
        all.sort_by(f64::total_cmp);
        assert_eq!(all, (0..83).map(|i| i as f64).collect::<Vec<_>>());
        assert!(partition_10(&data(9), 3).is_err());
    }
}
