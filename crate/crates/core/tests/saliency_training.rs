use sstam_core::saliency::{
    binarize, mean_loss, train, GroundTruthMask, SaliencyNet, SaliencyNetConfig, SaliencySample,
    SaliencyTrainOptions, DEFAULT_THRESHOLD,
};
use sstam_core::Tensor;

fn disk(side: usize, cx: f64, cy: f64, r: f64, fg: f64, bg: f64) -> SaliencySample {
    let mut img = Vec::with_capacity(side * side);
    let mut lab = Vec::with_capacity(side * side);
    for y in 0..side {
        for x in 0..side {
            let inside = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2) <= r * r;
            img.push(if inside { fg } else { bg });
            lab.push(inside as u8);
        }
    }
    SaliencySample::new(
        Tensor::new(&[1, side, side], img).unwrap(),
        GroundTruthMask::new(side, side, lab).unwrap(),
    )
    .unwrap()
}

fn corpus(n: usize, offset: f64) -> Vec<SaliencySample> {
    (0..n)
        .map(|i| {
            let f = i as f64 + offset;
            disk(
                64,
                16.0 + (f * 7.3) % 32.0,
                16.0 + (f * 3.1) % 32.0,
                6.0 + (f * 1.7) % 10.0,
                0.6 + (f * 0.13) % 0.4,
                (f * 0.07) % 0.4,
            )
        })
        .collect()
}

#[test]
fn disk_corpus_training_halves_held_out_loss() {
    let config = SaliencyNetConfig {
        side: 32,
        ..Default::default()
    };
    let train_set = corpus(200, 0.0);
    let held_out = corpus(20, 0.5);
    let seed = 7;
    let opts = SaliencyTrainOptions {
        epochs: 50,
        lr: 1e-3,
        batch_size: 8,
    };

    let untrained = SaliencyNet::new(config.clone(), sstam_core::rng::mix(seed, 0x5a11)).unwrap();
    let before = mean_loss(&untrained, &held_out).unwrap();
    let trained = train(&train_set, &config, &opts, seed).unwrap();
    let after = mean_loss(&trained.net, &held_out).unwrap();
    assert_eq!(trained.epoch_losses.len(), 50);
    assert!(
        after < 0.5 * before,
        "held-out loss {after} vs untrained {before}"
    );

    let (mut inside, mut outside) = ((0.0, 0usize), (0.0, 0usize));
    for s in &held_out {
        let map = trained.net.forward(&s.image).unwrap();
        for (p, &l) in map.probs().iter().zip(s.mask.labels()) {
            let acc = if l == 1 { &mut inside } else { &mut outside };
            acc.0 += p;
            acc.1 += 1;
        }
        let once = binarize(&map, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(binarize(&once.to_map(), DEFAULT_THRESHOLD).unwrap(), once);
    }
    let (mi, mo) = (inside.0 / inside.1 as f64, outside.0 / outside.1 as f64);
    assert!(mi > mo, "in-disk {mi} vs background {mo}");
}
