use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Error, Result};
use crate::metrics::plcc;
use crate::rng::mix;

use super::dataset::{
    partition_10, PeaIntensityVector, QualityDataset, ScoreKind, MIN_ENSEMBLE_RECORDS,
};
use super::svr::{train_svr, SvrModel, SvrParams};

pub const LEARNERS: usize = 10;
pub const SELECTED: usize = 3;
/// Upper bound kept strictly below 1 for every weight.
pub const WEIGHT_CEILING: f64 = 1.0 - 1e-9;

/// Validation PLCC of one learner; `degenerate` marks constant predictions scored as 0.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Ranking {
    pub plcc: f64,
    pub degenerate: bool,
}

/// PLCC with the ranking convention: zero-variance predictions score 0 and are flagged.
pub fn plcc_or_zero(predicted: &[f64], truth: &[f64]) -> Result<Ranking> {
    match plcc(predicted, truth) {
        Ok(v) => Ok(Ranking {
            plcc: v,
            degenerate: false,
        }),
        Err(Error::Degenerate(_)) => {
            let m = truth.iter().sum::<f64>() / truth.len() as f64;
            if truth.iter().all(|t| *t == m) {
                return Err(Error::Degenerate("validation scores have zero variance"));
            }
            Ok(Ranking {
                plcc: 0.0,
                degenerate: true,
            })
        }
        Err(e) => Err(e),
    }
}

/// Each model's PLCC against one validation set (oriented scores).
pub fn rank_by_plcc(models: &[SvrModel], validation: &QualityDataset) -> Result<Vec<Ranking>> {
    let xs = validation.inputs();
    let ys = validation.oriented_scores();
    models
        .iter()
        .map(|m| {
            let p: Vec<f64> = xs.iter().map(|x| m.predict(x)).collect();
            plcc_or_zero(&p, &ys)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SvrEnsemble {
    pub models: Vec<SvrModel>,
    pub rankings: Vec<Ranking>,
    /// Indices of the top learners, best first.
    pub selected: Vec<usize>,
    /// One weight per learner; zero outside `selected`.
    pub weights: Vec<f64>,
    /// A selected learner's weight was floored or capped to keep all three in `(0, 1)`.
    pub clamped: bool,
    pub score_kind: ScoreKind,
    pub seed: u64,
}

/// Top three by PLCC (ties to the lower index), weights proportional to `max(plcc, 0)`.
///
/// All non-positive gives uniform thirds. A selected learner whose share would be 0 is
/// floored at `1e-9` of the positive mass before renormalizing, so exactly three weights are
/// nonzero and none reaches 1.
pub fn select_and_weight(plccs: &[f64]) -> Result<(Vec<usize>, Vec<f64>, bool)> {
    if plccs.len() < SELECTED {
        return Err(invalid!(
            "need at least {SELECTED} learners, got {}",
            plccs.len()
        ));
    }
    if plccs.iter().any(|p| p.is_nan()) {
        return Err(Error::NonFinite("learner PLCC"));
    }
    let mut order: Vec<usize> = (0..plccs.len()).collect();
    order.sort_by(|&a, &b| plccs[b].total_cmp(&plccs[a]).then(a.cmp(&b)));
    let selected: Vec<usize> = order[..SELECTED].to_vec();
    let raw: Vec<f64> = selected.iter().map(|&i| plccs[i].max(0.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut weights = vec![0.0; plccs.len()];
    let mut clamped = false;
    if total <= 0.0 {
        for &i in &selected {
            weights[i] = 1.0 / SELECTED as f64;
        }
    } else {
        let floor = 1e-9 * total;
        let floored: Vec<f64> = raw
            .iter()
            .map(|&r| {
                if r < floor {
                    clamped = true;
                    floor
                } else {
                    r
                }
            })
            .collect();
        let sum: f64 = floored.iter().sum();
        for (&i, &r) in selected.iter().zip(&floored) {
            weights[i] = r / sum;
        }
    }
    if selected.iter().any(|&i| weights[i] > WEIGHT_CEILING) {
        clamped = true;
        let excess: f64 = selected
            .iter()
            .map(|&i| (weights[i] - WEIGHT_CEILING).max(0.0))
            .sum();
        let under: Vec<usize> = selected
            .iter()
            .copied()
            .filter(|&i| weights[i] <= WEIGHT_CEILING)
            .collect();
        for &i in &selected {
            weights[i] = weights[i].min(WEIGHT_CEILING);
        }
        for &i in &under {
            weights[i] += excess / under.len() as f64;
        }
    }
    Ok((selected, weights, clamped))
}

impl SvrEnsemble {
    /// Assembles an ensemble from trained learners and their validation rankings.
    pub fn from_rankings(
        models: Vec<SvrModel>,
        rankings: Vec<Ranking>,
        score_kind: ScoreKind,
        seed: u64,
    ) -> Result<Self> {
        if models.len() != rankings.len() {
            return Err(shape_err!(
                "{} models for {} rankings",
                models.len(),
                rankings.len()
            ));
        }
        let plccs: Vec<f64> = rankings.iter().map(|r| r.plcc).collect();
        let (selected, weights, clamped) = select_and_weight(&plccs)?;
        Ok(SvrEnsemble {
            models,
            rankings,
            selected,
            weights,
            clamped,
            score_kind,
            seed,
        })
    }

    /// Each learner's raw prediction.
    pub fn member_predictions(&self, x: &PeaIntensityVector) -> Vec<f64> {
        let a = x.to_array();
        self.models.iter().map(|m| m.predict(&a)).collect()
    }

    /// Weighted sum over all learners; only the selected three contribute.
    pub fn predict(&self, x: &PeaIntensityVector) -> f64 {
        let a = x.to_array();
        self.weights
            .iter()
            .zip(&self.models)
            .filter(|(w, _)| **w != 0.0)
            .map(|(w, m)| w * m.predict(&a))
            .sum()
    }
}

/// Ten learners on a seeded partition; each is ranked on the records of the other nine subsets.
pub fn train_ensemble(train: &QualityDataset, params: SvrParams, seed: u64) -> Result<SvrEnsemble> {
    if train.len() < MIN_ENSEMBLE_RECORDS {
        return Err(invalid!(
            "ensemble needs at least {MIN_ENSEMBLE_RECORDS} records, got {}",
            train.len()
        ));
    }
    let parts = partition_10(train, seed)?;
    let mut models = Vec::with_capacity(LEARNERS);
    for part in &parts {
        if part.len() < 2 {
            return Err(invalid!(
                "learner subset has {} records; SVR needs 2",
                part.len()
            ));
        }
        models.push(train_svr(&part.inputs(), &part.oriented_scores(), params)?);
    }
    let mut rankings = Vec::with_capacity(LEARNERS);
    for (i, m) in models.iter().enumerate() {
        let mut oob = QualityDataset::new(train.kind);
        for (j, p) in parts.iter().enumerate() {
            if j != i {
                oob.extend(p.clone())?;
            }
        }
        rankings.push(rank_by_plcc(core::slice::from_ref(m), &oob)?[0]);
    }
    SvrEnsemble::from_rankings(models, rankings, train.kind, mix(seed, 0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::build_dataset;

    #[test]
    fn proportional_weights() {
        let p = [0.9, 0.8, 0.7, 0.1, 0.2, 0.3, 0.0, -0.5, 0.4, 0.5];
        let (sel, w, clamped) = select_and_weight(&p).unwrap();
        assert_eq!(sel, vec![0, 1, 2]);
        assert!(!clamped);
        assert!((w[0] - 0.375).abs() < 1e-12);
        assert!((w[1] - 0.8 / 2.4).abs() < 1e-12);
        assert!((w[2] - 0.7 / 2.4).abs() < 1e-12);
        assert!(w[3..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ties_and_uniform_cases() {
        let (sel, w, _) = select_and_weight(&[0.5, 0.7, 0.7, 0.7, 0.1]).unwrap();
        assert_eq!(sel, vec![1, 2, 3]);
        assert!(sel.iter().all(|&i| (w[i] - 1.0 / 3.0).abs() < 1e-15));
        let (_, w, _) = select_and_weight(&[-0.5, -0.2, -0.9, -0.1]).unwrap();
        assert_eq!(w.iter().filter(|&&v| v != 0.0).count(), 3);
        assert!((w[3] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn dominant_learner_is_clamped() {
        let (sel, w, clamped) = select_and_weight(&[0.0, 0.9, -0.3, -0.1, 0.0]).unwrap();
        assert!(clamped);
        assert_eq!(sel, vec![1, 0, 4]);
        assert_eq!(w.iter().filter(|&&v| v != 0.0).count(), 3);
        assert!(w.iter().all(|&v| (0.0..1.0).contains(&v)));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ranking_conventions() {
        let truth = [1.0, 3.0, 2.0];
        assert_eq!(
            plcc_or_zero(&truth, &truth).unwrap(),
            Ranking {
                plcc: 1.0,
                degenerate: false
            }
        );
        assert_eq!(
            plcc_or_zero(&[-1.0, -3.0, -2.0], &truth).unwrap().plcc,
            -1.0
        );
        assert_eq!(
            plcc_or_zero(&[4.0; 3], &truth).unwrap(),
            Ranking {
                plcc: 0.0,
                degenerate: true
            }
        );
        assert!(plcc_or_zero(&truth, &[2.0; 3]).is_err());
    }

    #[test]
    fn weighted_prediction() {
        let v = PeaIntensityVector::default();
        let flat = |c: f64| {
            train_svr(&[vec![0.0; 6], vec![1.0; 6]], &[c, c], SvrParams::default()).unwrap()
        };
        let mut e = SvrEnsemble {
            models: vec![flat(60.0), flat(70.0), flat(80.0)],
            rankings: vec![
                Ranking {
                    plcc: 0.5,
                    degenerate: false
                };
                3
            ],
            selected: vec![0, 1, 2],
            weights: vec![0.5, 0.3, 0.2],
            clamped: false,
            score_kind: ScoreKind::Mos,
            seed: 0,
        };
        assert!((e.predict(&v) - 67.0).abs() < 1e-12);
        e.models = vec![flat(5.0), flat(5.0), flat(5.0)];
        assert!((e.predict(&v) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn trains_on_a_smooth_target() {
        let xs: Vec<PeaIntensityVector> = (0..60)
            .map(|i| {
                let t = i as f64 / 59.0;
                PeaIntensityVector::new([t, (1.0 - t) * 0.5, t * t, 0.2, 0.1 * t, 0.0]).unwrap()
            })
            .collect();
        let y: Vec<f64> = xs
            .iter()
            .map(|v| 80.0 - 40.0 * v.blocking - 10.0 * v.color_bleeding)
            .collect();
        let d = build_dataset(&xs, &y, ScoreKind::Mos).unwrap();
        let e = train_ensemble(&d, SvrParams::default(), 4).unwrap();
        assert_eq!(e, train_ensemble(&d, SvrParams::default(), 4).unwrap());
        assert_eq!(e.weights.iter().filter(|&&w| w != 0.0).count(), 3);
        let pred: Vec<f64> = xs.iter().map(|v| e.predict(v)).collect();
        assert!(crate::metrics::srcc(&pred, &y).unwrap() > 0.95);
    }
}
