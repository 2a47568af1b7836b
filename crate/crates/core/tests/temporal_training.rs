use sstam_core::optim::FitOptions;
use sstam_core::synth::{synth_corpus, CorpusConfig, LabeledClip, PeaKind};
use sstam_core::temporal::{train_temporal, TemporalDetectorConfig};

fn clips(kind: PeaKind, repeats: usize, seed: u64) -> Vec<LabeledClip> {
    let cfg = CorpusConfig {
        width: 64,
        height: 64,
        patch_side: 64,
        kinds: vec![kind],
        strengths: vec![0.0, 1.0],
        repeats,
        ..Default::default()
    };
    synth_corpus(&cfg, seed).unwrap().clips(kind, 8).unwrap()
}

#[test]
fn flicker_detector_reaches_eighty_five_percent() {
    let train = clips(PeaKind::Flickering, 20, 1);
    let held = clips(PeaKind::Flickering, 10, 2);
    assert_eq!(train.len(), 80);
    let opts = FitOptions {
        epochs: 30,
        lr: 1e-3,
        batch_size: 8,
    };
    let trained = train_temporal(
        &train,
        PeaKind::Flickering,
        &TemporalDetectorConfig::default(),
        opts,
        3,
    )
    .unwrap();
    let acc = trained.detector.accuracy(&held).unwrap();
    assert!(acc >= 0.85, "held-out accuracy {acc}");
}
