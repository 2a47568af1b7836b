use sstam_core::gradcheck::suite;

#[test]
fn every_primitive_matches_central_differences() {
    let report = suite::run(0x5eed, 100).unwrap();
    let mut failures = Vec::new();
    for (name, err) in &report {
        if *err >= 1e-6 {
            failures.push(format!("{name}: {err:e}"));
        }
    }
    assert!(failures.is_empty(), "gradient mismatches: {failures:?}");
    assert_eq!(report.len(), suite::PRIMITIVES.len());
}

use rand::Rng;
use sstam_core::gradcheck::gradient_check;
use sstam_core::rng::derive;
use sstam_core::saliency::{mixed_loss, SaliencyNet, SaliencyNetConfig};
use sstam_core::{Tape, Tensor};

#[test]
fn mixed_loss_on_random_8x8_maps() {
    let mut worst: f64 = 0.0;
    for trial in 0..100 {
        let mut rng = derive(0x10557, trial);
        let s: Vec<f64> = (0..64).map(|_| rng.gen_range(0.05..0.95)).collect();
        let g: Vec<f64> = (0..64).map(|_| rng.gen_bool(0.4) as u8 as f64).collect();
        let g = Tensor::new(&[1, 8, 8], g).unwrap();
        let s = Tensor::new(&[1, 8, 8], s).unwrap();
        let err = gradient_check(
            |tape: &mut Tape, x| {
                let gv = tape.constant(g.clone());
                mixed_loss(tape, x, gv)
            },
            &s,
            1e-5,
        )
        .unwrap();
        worst = worst.max(err);
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn softmax_cross_entropy_on_random_logits() {
    for trial in 0..100 {
        let mut rng = derive(0xce, trial);
        let n = rng.gen_range(2..8);
        let target = rng.gen_range(0..n);
        let logits = Tensor::new(&[n], (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect()).unwrap();
        let err = gradient_check(
            |tape: &mut Tape, x| {
                let p = tape.softmax(x);
                let pt = tape.index(p, target)?;
                let lp = tape.log(pt);
                Ok(tape.mul_scalar(lp, -1.0))
            },
            &logits,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "trial {trial}: {err:e}");
    }
}

#[test]
fn saliency_network_input_gradient() {
    let cfg = SaliencyNetConfig {
        depth: 2,
        base_channels: 2,
        cbam_kernel: 3,
        ppm_bins: vec![1, 2],
        side: 8,
        ..Default::default()
    };
    let net = SaliencyNet::new(cfg, 3).unwrap();
    let mut rng = derive(0x5a1, 0);
    let x = Tensor::new(
        &[1, 8, 8],
        (0..64).map(|_| rng.gen_range(0.0..1.0)).collect(),
    )
    .unwrap();
    let g = Tensor::new(
        &[1, 8, 8],
        (0..64).map(|i| ((i / 8) > 3) as u8 as f64).collect(),
    )
    .unwrap();
    let err = gradient_check(
        |tape: &mut Tape, xv| {
            let p = net.forward_tape(tape, xv)?;
            let gv = tape.constant(g.clone());
            mixed_loss(tape, p, gv)
        },
        &x,
        1e-5,
    )
    .unwrap();
    assert!(err < 1e-6, "{err:e}");
}
