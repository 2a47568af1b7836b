//! Intensity-vector datasets, the ε-SVR base learner and the bagged top-3 ensemble.

mod dataset;
mod ensemble;
mod svr;

pub use dataset::{
    build_dataset, partition_10, split_8_2, PeaIntensityVector, QualityDataset, QualityRecord,
    ScoreKind, MIN_ENSEMBLE_RECORDS,
};
pub use ensemble::{
    plcc_or_zero, rank_by_plcc, select_and_weight, train_ensemble, Ranking, SvrEnsemble, LEARNERS,
    SELECTED, WEIGHT_CEILING,
};
pub use svr::{train_svr, Standardizer, SvrModel, SvrParams};
