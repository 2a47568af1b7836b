use alloc::vec::Vec;

use crate::error::{shape_err, Error, Result};
use crate::optim::{fit, FitOptions};
use crate::rng::mix;
use crate::tape::Tape;
use crate::tensor::Tensor;
use crate::video::resize_square;

use super::loss::mixed_loss;
use super::net::{SaliencyNet, SaliencyNetConfig};
use super::GroundTruthMask;

/// A luma grid (`[1,H,W]`, unit interval) with its object mask.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencySample {
    pub image: Tensor,
    pub mask: GroundTruthMask,
}

impl SaliencySample {
    pub fn new(image: Tensor, mask: GroundTruthMask) -> Result<Self> {
        match image.shape() {
            [1, h, w] if *h == mask.height() && *w == mask.width() => {
                Ok(SaliencySample { image, mask })
            }
            s => Err(shape_err!(
                "image {:?} vs mask {}x{}",
                s,
                mask.width(),
                mask.height()
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SaliencyTrainOptions {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for SaliencyTrainOptions {
    fn default() -> Self {
        SaliencyTrainOptions {
            epochs: 50,
            lr: 1e-3,
            batch_size: 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedSaliency {
    pub net: SaliencyNet,
    /// Mean training loss seen during each epoch.
    pub epoch_losses: Vec<f64>,
}

/// Network-resolution input and target for one sample.
fn prepare(sample: &SaliencySample, side: usize) -> Result<(Tensor, Tensor)> {
    let x = resize_square(&sample.image, side)?;
    let g = sample.mask.resized(side, side).to_tensor();
    Ok((x, g))
}

/// Mean mixed loss of `net` over `samples`, evaluated at network resolution.
pub fn mean_loss(net: &SaliencyNet, samples: &[SaliencySample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::Empty("saliency samples"));
    }
    let mut total = 0.0;
    for s in samples {
        let (x, g) = prepare(s, net.config().side)?;
        let mut tape = Tape::new();
        let xv = tape.constant(x);
        let gv = tape.constant(g);
        let p = net.forward_tape(&mut tape, xv)?;
        let l = mixed_loss(&mut tape, p, gv)?;
        total += tape.value(l).item()?;
    }
    Ok(total / samples.len() as f64)
}

/// Seeded mini-batch Adam on the mixed loss.
pub fn train(
    corpus: &[SaliencySample],
    config: &SaliencyNetConfig,
    opts: &SaliencyTrainOptions,
    seed: u64,
) -> Result<TrainedSaliency> {
    let net = SaliencyNet::new(config.clone(), mix(seed, 0x5a11))?;
    train_from(net, corpus, opts, seed)
}

/// Continues training an existing network.
pub fn train_from(
    mut net: SaliencyNet,
    corpus: &[SaliencySample],
    opts: &SaliencyTrainOptions,
    seed: u64,
) -> Result<TrainedSaliency> {
    if corpus.is_empty() {
        return Err(Error::Empty("saliency corpus"));
    }
    let geom = corpus[0].image.shape().to_vec();
    if corpus.iter().any(|s| s.image.shape() != geom.as_slice()) {
        return Err(shape_err!("corpus images must share geometry {:?}", geom));
    }
    let side = net.config().side;
    let prepared = corpus
        .iter()
        .map(|s| prepare(s, side))
        .collect::<Result<Vec<_>>>()?;

    let fit_opts = FitOptions {
        epochs: opts.epochs,
        lr: opts.lr,
        batch_size: opts.batch_size,
    };
    let (layers, config, store) = net.split_mut();
    let epoch_losses = fit(store, &prepared, fit_opts, seed, |tape, store, (x, g)| {
        let xv = tape.constant(x.clone());
        let gv = tape.constant(g.clone());
        let p = layers.forward(tape, store, config, xv)?;
        mixed_loss(tape, p, gv)
    })?;
    Ok(TrainedSaliency { net, epoch_losses })
}
