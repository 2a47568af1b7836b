use sstam_core::optim::FitOptions;
use sstam_core::spatial::{train_detector, SpatialDetectorConfig};
use sstam_core::synth::{synth_corpus, CorpusConfig, LabeledPatch, PeaKind};

fn patches(kind: PeaKind, repeats: usize, seed: u64) -> Vec<LabeledPatch> {
    let cfg = CorpusConfig {
        kinds: vec![kind],
        strengths: vec![0.0, 1.0],
        repeats,
        frames: 9,
        ..Default::default()
    };
    synth_corpus(&cfg, seed).unwrap().patches(kind, 8).unwrap()
}

#[test]
fn blocking_detector_reaches_ninety_percent() {
    let kind = PeaKind::Blocking;
    let train = patches(kind, 25, 1);
    let held = patches(kind, 8, 2);
    assert_eq!(train.len(), 400);
    let opts = FitOptions {
        epochs: 30,
        lr: 3e-3,
        batch_size: 16,
    };
    let trained = train_detector(&train, kind, &SpatialDetectorConfig::default(), opts, 5).unwrap();
    let acc = trained.detector.accuracy(&held).unwrap();
    assert!(acc >= 0.9, "held-out accuracy {acc}");
}
