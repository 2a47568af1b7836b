use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, shape_err, Result};
use crate::layers::{Conv, Linear};
use crate::param::{ParamId, ParamStore};
use crate::tape::{Tape, Var};

/// Channel attention followed by spatial attention, each a sigmoid gate.
#[derive(Debug, Clone, Copy)]
pub struct Cbam {
    pub fc1: Linear,
    pub fc2: Linear,
    pub spatial: Conv,
}

impl Cbam {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        kernel: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if channels < 2 {
            return Err(invalid!(
                "channel attention needs at least 2 channels, got {channels}"
            ));
        }
        let hidden = (channels / 2).max(1);
        Ok(Cbam {
            fc1: Linear::new(store, &format!("{name}.fc1"), channels, hidden, rng),
            fc2: Linear::new(store, &format!("{name}.fc2"), hidden, channels, rng),
            spatial: Conv::new(store, &format!("{name}.spatial"), 2, 1, kernel, 1, rng),
        })
    }

    fn mlp(&self, tape: &mut Tape, store: &ParamStore, v: Var) -> Result<Var> {
        let h = self.fc1.forward(tape, store, v)?;
        let h = tape.relu(h);
        self.fc2.forward(tape, store, h)
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let avg = tape.global_avg_pool(x)?;
        let max = tape.global_max_pool(x)?;
        let a = self.mlp(tape, store, avg)?;
        let m = self.mlp(tape, store, max)?;
        let logits = tape.add(a, m)?;
        let gate = tape.sigmoid(logits);
        let x = tape.scale_channels(x, gate)?;

        let mean_map = tape.channel_mean(x)?;
        let max_map = tape.channel_max(x)?;
        let pooled = tape.concat(&[mean_map, max_map])?;
        let s = self.spatial.forward(tape, store, pooled)?;
        let gate = tape.sigmoid(s);
        tape.scale_spatial(x, gate)
    }

    pub fn params(&self) -> Vec<ParamId> {
        let mut p = Vec::new();
        p.extend(self.fc1.params());
        p.extend(self.fc2.params());
        p.extend([self.spatial.kernel, self.spatial.bias]);
        p
    }
}

/// Pyramid pooling: per-bin average pooling, 1×1 projection, upsampling,
/// concatenation with the input and a 1×1 fuse back to `channels`.
#[derive(Debug, Clone)]
pub struct Ppm {
    pub bins: Vec<usize>,
    pub branches: Vec<Conv>,
    pub fuse: Conv,
}

impl Ppm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        channels: usize,
        bins: &[usize],
        rng: &mut impl Rng,
    ) -> Self {
        let branch_c = (channels / 2).max(1);
        let branches = bins
            .iter()
            .map(|b| {
                Conv::new(
                    store,
                    &format!("{name}.bin{b}"),
                    channels,
                    branch_c,
                    1,
                    1,
                    rng,
                )
            })
            .collect();
        let fuse = Conv::new(
            store,
            &format!("{name}.fuse"),
            channels + branch_c * bins.len(),
            channels,
            1,
            1,
            rng,
        );
        Ppm {
            bins: bins.to_vec(),
            branches,
            fuse,
        }
    }

    /// Pooled branch of each bin before upsampling, `[branch_c, b, b]`.
    pub fn branch_outputs(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Vec<Var>> {
        self.bins
            .iter()
            .zip(&self.branches)
            .map(|(&b, conv)| {
                let pooled = tape.adaptive_avg_pool(x, b)?;
                let y = conv.forward(tape, store, pooled)?;
                Ok(tape.relu(y))
            })
            .collect()
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        let (h, w) = (shape[1], shape[2]);
        let mut parts = Vec::with_capacity(self.bins.len() + 1);
        parts.push(x);
        for branch in self.branch_outputs(tape, store, x)? {
            parts.push(tape.resize(branch, h, w)?);
        }
        let cat = tape.concat(&parts)?;
        let y = self.fuse.forward(tape, store, cat)?;
        Ok(tape.relu(y))
    }
}

/// Global guidance into one decoder level: `decoder + w · proj(guidance)`.
#[derive(Debug, Clone, Copy)]
pub struct Ggf {
    pub proj: Conv,
    pub weight: ParamId,
}

impl Ggf {
    pub const INITIAL_WEIGHT: f64 = 0.5;

    pub fn new(store: &mut ParamStore, name: &str, channels: usize, rng: &mut impl Rng) -> Self {
        let proj = Conv::new(
            store,
            &format!("{name}.proj"),
            channels,
            channels,
            1,
            1,
            rng,
        );
        let weight = store.add_const(&format!("{name}.weight"), &[1], Self::INITIAL_WEIGHT);
        Ggf { proj, weight }
    }

    /// `guidance` must already have the decoder feature's extent.
    pub fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        decoder: Var,
        guidance: Var,
    ) -> Result<Var> {
        ggf_fuse(tape, store, self, decoder, guidance)
    }
}

pub fn ggf_fuse(
    tape: &mut Tape,
    store: &ParamStore,
    ggf: &Ggf,
    decoder: Var,
    guidance: Var,
) -> Result<Var> {
    let ds = tape.value(decoder).shape();
    let gs = tape.value(guidance).shape();
    if ds[1..] != gs[1..] {
        return Err(shape_err!(
            "guidance {:?} not upsampled to decoder extent {:?}",
            gs,
            ds
        ));
    }
    let projected = ggf.proj.forward(tape, store, guidance)?;
    let w = tape.param(store, ggf.weight);
    let scaled = tape.scale_by(projected, w)?;
    tape.add(decoder, scaled)
}
