use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, shape_err, Result};
use crate::layers::Conv;
use crate::param::ParamStore;
use crate::rng::seeded;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::video::{luma_unit, resize_square, VideoSequence};

use super::blocks::{Cbam, Ggf, Ppm};
use super::{binarize, BinaryMask, SaliencyMap};

#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SaliencyNetConfig {
    pub depth: usize,
    pub base_channels: usize,
    pub cbam: bool,
    pub cbam_kernel: usize,
    pub ppm_bins: Vec<usize>,
    pub ggf: bool,
    pub side: usize,
}

impl Default for SaliencyNetConfig {
    fn default() -> Self {
        SaliencyNetConfig {
            depth: 4,
            base_channels: 8,
            cbam: true,
            cbam_kernel: 7,
            ppm_bins: alloc::vec![1, 2, 4],
            ggf: true,
            side: 64,
        }
    }
}

impl SaliencyNetConfig {
    pub fn bottleneck_side(&self) -> usize {
        self.side >> (self.depth - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth < 2 {
            return Err(invalid!("depth must be at least 2, got {}", self.depth));
        }
        if self.depth > 16 || self.side == 0 || self.side % (1 << (self.depth - 1)) != 0 {
            return Err(invalid!(
                "side {} not divisible by 2^{}",
                self.side,
                self.depth - 1
            ));
        }
        if self.base_channels == 0 || (self.cbam && self.base_channels < 2) {
            return Err(invalid!("base channels {} too small", self.base_channels));
        }
        if self.cbam && self.cbam_kernel % 2 == 0 {
            return Err(invalid!(
                "attention kernel must be odd, got {}",
                self.cbam_kernel
            ));
        }
        let b = self.bottleneck_side();
        if let Some(bin) = self.ppm_bins.iter().find(|&&bin| bin == 0 || bin > b) {
            return Err(invalid!("pyramid bin {bin} outside 1..={b}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct EncoderLevel {
    conv: Conv,
    cbam: Option<Cbam>,
}

#[derive(Debug, Clone)]
struct DecoderLevel {
    conv: Conv,
    ggf: Option<Ggf>,
}

#[derive(Debug, Clone)]
pub(super) struct Layers {
    encoder: Vec<EncoderLevel>,
    ppm: Option<Ppm>,
    decoder: Vec<DecoderLevel>,
    head: Conv,
}

/// U-shaped saliency network over a single luma plane.
#[derive(Debug, Clone)]
pub struct SaliencyNet {
    config: SaliencyNetConfig,
    store: ParamStore,
    layers: Layers,
}

impl SaliencyNet {
    pub fn new(config: SaliencyNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let c = config.base_channels;
        let mut encoder = Vec::with_capacity(config.depth);
        for l in 0..config.depth {
            let c_in = if l == 0 { 1 } else { c };
            let conv = Conv::new(&mut store, &format!("enc{l}.conv"), c_in, c, 3, 1, &mut rng);
            let cbam = if config.cbam {
                Some(Cbam::new(
                    &mut store,
                    &format!("enc{l}.cbam"),
                    c,
                    config.cbam_kernel,
                    &mut rng,
                )?)
            } else {
                None
            };
            encoder.push(EncoderLevel { conv, cbam });
        }
        let ppm = (!config.ppm_bins.is_empty())
            .then(|| Ppm::new(&mut store, "ppm", c, &config.ppm_bins, &mut rng));
        let mut decoder = Vec::with_capacity(config.depth - 1);
        for l in 0..config.depth - 1 {
            let conv = Conv::new(
                &mut store,
                &format!("dec{l}.conv"),
                2 * c,
                c,
                3,
                1,
                &mut rng,
            );
            let ggf = config
                .ggf
                .then(|| Ggf::new(&mut store, &format!("dec{l}.ggf"), c, &mut rng));
            decoder.push(DecoderLevel { conv, ggf });
        }
        let head = Conv::new(&mut store, "head", c, 1, 1, 1, &mut rng);
        Ok(SaliencyNet {
            config,
            store,
            layers: Layers {
                encoder,
                ppm,
                decoder,
                head,
            },
        })
    }

    pub fn config(&self) -> &SaliencyNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Records the network on `tape` for a `[1,side,side]` input; returns `[1,side,side]` probabilities.
    pub fn forward_tape(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        self.layers.forward(tape, &self.store, &self.config, x)
    }

    /// Disjoint views for optimizers: layer handles, config and the parameter store.
    pub(super) fn split_mut(&mut self) -> (&Layers, &SaliencyNetConfig, &mut ParamStore) {
        (&self.layers, &self.config, &mut self.store)
    }

    /// Probabilities at network resolution for a `[1,H,W]` unit grid.
    pub fn predict_square(&self, grid: &Tensor) -> Result<Tensor> {
        check_grid(grid)?;
        let input = resize_square(grid, self.config.side)?;
        let mut tape = Tape::new();
        let x = tape.constant(input);
        let y = self.forward_tape(&mut tape, x)?;
        Ok(tape.value(y).clone())
    }

    /// Saliency map in the source geometry of a `[1,H,W]` unit grid.
    pub fn forward(&self, grid: &Tensor) -> Result<SaliencyMap> {
        let (h, w) = (grid.shape()[1], grid.shape()[2]);
        let square = self.predict_square(grid)?;
        let out = if (h, w) == (self.config.side, self.config.side) {
            square
        } else {
            crate::layers::resize_bilinear(&square, h, w)?
        };
        // bilinear weights are convex, so only rounding can leave [0,1]
        let clamped = out.map(|v| v.clamp(0.0, 1.0));
        SaliencyMap::from_tensor(&clamped)
    }

    /// Thresholded saliency mask of every frame's luma.
    pub fn video_masks(&self, seq: &VideoSequence, threshold: f64) -> Result<Vec<BinaryMask>> {
        seq.frames()
            .iter()
            .map(|f| binarize(&self.forward(&luma_unit(f))?, threshold))
            .collect()
    }
}

impl Layers {
    pub(super) fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        config: &SaliencyNetConfig,
        x: Var,
    ) -> Result<Var> {
        let s = config.side;
        if tape.value(x).shape() != [1, s, s] {
            return Err(shape_err!(
                "network input must be [1,{s},{s}], got {:?}",
                tape.value(x).shape()
            ));
        }
        let mut skips = Vec::with_capacity(config.depth);
        let mut h = x;
        for (l, level) in self.encoder.iter().enumerate() {
            if l > 0 {
                h = tape.max_pool2(h)?;
            }
            h = level.conv.forward(tape, store, h)?;
            h = tape.relu(h);
            if let Some(cbam) = &level.cbam {
                h = cbam.forward(tape, store, h)?;
            }
            skips.push(h);
        }
        let global = match &self.ppm {
            Some(ppm) => ppm.forward(tape, store, h)?,
            None => h,
        };
        let mut d = global;
        for l in (0..config.depth - 1).rev() {
            let skip = skips[l];
            let side = tape.value(skip).shape()[1];
            let up = tape.resize(d, side, side)?;
            let cat = tape.concat(&[up, skip])?;
            let level = &self.decoder[l];
            d = level.conv.forward(tape, store, cat)?;
            d = tape.relu(d);
            if let Some(ggf) = &level.ggf {
                let guide = tape.resize(global, side, side)?;
                d = ggf.forward(tape, store, d, guide)?;
            }
        }
        let logits = self.head.forward(tape, store, d)?;
        Ok(tape.sigmoid(logits))
    }
}

fn check_grid(grid: &Tensor) -> Result<()> {
    if grid.rank() != 3 || grid.shape()[0] != 1 {
        return Err(shape_err!(
            "luma grid must be [1,H,W], got {:?}",
            grid.shape()
        ));
    }
    if grid.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(invalid!("luma grid values must lie in [0,1]"));
    }
    Ok(())
}
