//! Temporal artifact detection with a divided space-time attention encoder.
//!
//! Tokens of a clip are laid out row-wise as `t·(N+1) + n`, where `n = 0` is the
//! classification token of time step `t` and `n = 1..=N` are its patch tokens.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{invalid, shape_err, Error, Result};
use crate::layers::{attention_weights, LayerNorm, Linear};
use crate::optim::{fit, FitOptions};
use crate::param::{ParamId, ParamStore};
use crate::rng::{mix, seeded};
use crate::spatial::check_two_classes;
use crate::synth::{LabeledClip, PeaKind};
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;
use crate::video::{luma_unit, resize_square, VideoSequence};

/// Index of the "artifact present" class in the two-way head.
pub const PRESENT: usize = 0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TemporalDetectorConfig {
    pub n_t: usize,
    pub side: usize,
    pub patch_side: usize,
    pub dim: usize,
    pub heads: usize,
    pub blocks: usize,
    pub mlp_hidden: usize,
    /// Learning-rate multiplier on temporal-attention parameters.
    pub temporal_lr_scale: f64,
}

impl Default for TemporalDetectorConfig {
    fn default() -> Self {
        TemporalDetectorConfig {
            n_t: 8,
            side: 64,
            patch_side: 16,
            dim: 32,
            heads: 4,
            blocks: 2,
            mlp_hidden: 64,
            temporal_lr_scale: 2.0,
        }
    }
}

impl TemporalDetectorConfig {
    pub fn tokens_per_frame(&self) -> usize {
        let g = self.side / self.patch_side;
        g * g
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_t == 0
            || self.patch_side == 0
            || self.side == 0
            || self.side % self.patch_side != 0
        {
            return Err(invalid!(
                "side {} must be a positive multiple of patch side {}",
                self.side,
                self.patch_side
            ));
        }
        if self.heads == 0 || self.dim == 0 || self.dim % self.heads != 0 {
            return Err(invalid!(
                "dim {} not divisible by {} heads",
                self.dim,
                self.heads
            ));
        }
        if self.blocks == 0 || self.mlp_hidden == 0 {
            return Err(invalid!(
                "encoder needs at least one block and a hidden layer"
            ));
        }
        if !(self.temporal_lr_scale >= 0.0 && self.temporal_lr_scale.is_finite()) {
            return Err(invalid!(
                "temporal learning-rate scale {} invalid",
                self.temporal_lr_scale
            ));
        }
        Ok(())
    }
}

/// `N_t` consecutive `[1,H,W]` luma grids.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub frames: Vec<Tensor>,
    pub index: usize,
}

/// Disjoint consecutive clips; trailing frames that do not fill a clip are dropped.
pub fn split_clips(seq: &VideoSequence, n_t: usize) -> Result<Vec<Clip>> {
    if n_t == 0 {
        return Err(invalid!("clip length must be positive"));
    }
    if seq.len() < n_t {
        return Err(invalid!(
            "{} frames cannot fill a {n_t}-frame clip",
            seq.len()
        ));
    }
    Ok(seq
        .frames()
        .chunks_exact(n_t)
        .enumerate()
        .map(|(index, chunk)| Clip {
            frames: chunk.iter().map(luma_unit).collect(),
            index,
        })
        .collect())
}

/// Rows `[T·N, 2p²]`: each non-overlapping patch (minus the clip's mean luma) followed by
/// its absolute difference from the previous frame (zero at the first frame). Frames are
/// resized to `side` first.
pub fn patch_rows(frames: &[Tensor], config: &TemporalDetectorConfig) -> Result<Tensor> {
    if frames.len() != config.n_t {
        return Err(shape_err!(
            "clip has {} frames, expected {}",
            frames.len(),
            config.n_t
        ));
    }
    let (s, p) = (config.side, config.patch_side);
    let g = s / p;
    let mut resized = Vec::with_capacity(frames.len());
    for f in frames {
        if f.rank() != 3 || f.shape()[0] != 1 {
            return Err(shape_err!(
                "clip frames must be [1,H,W], got {:?}",
                f.shape()
            ));
        }
        resized.push(resize_square(f, s)?);
    }
    let mean = resized
        .iter()
        .map(|f| f.data().iter().sum::<f64>())
        .sum::<f64>()
        / (resized.len() * s * s) as f64;
    let mut data = Vec::with_capacity(2 * frames.len() * s * s);
    for (t, f) in resized.iter().enumerate() {
        let d = f.data();
        let prev = resized[t.saturating_sub(1)].data();
        for gr in 0..g {
            for gc in 0..g {
                for r in 0..p {
                    let start = (gr * p + r) * s + gc * p;
                    data.extend(d[start..start + p].iter().map(|v| v - mean));
                }
                for r in 0..p {
                    let start = (gr * p + r) * s + gc * p;
                    data.extend((start..start + p).map(|i| (d[i] - prev[i]).abs()));
                }
            }
        }
    }
    Tensor::new(&[config.n_t * g * g, 2 * p * p], data)
}

/// Row groups for the two attention passes over `t` steps of `n + 1` tokens.
#[derive(Debug, Clone)]
pub struct AttentionGroups {
    pub temporal: Arc<Vec<Vec<usize>>>,
    pub spatial: Arc<Vec<Vec<usize>>>,
}

impl AttentionGroups {
    pub fn new(t: usize, n: usize) -> Self {
        let temporal = (0..=n)
            .map(|i| (0..t).map(|s| s * (n + 1) + i).collect())
            .collect();
        let spatial = (0..t)
            .map(|s| (0..=n).map(|i| s * (n + 1) + i).collect())
            .collect();
        AttentionGroups {
            temporal: Arc::new(temporal),
            spatial: Arc::new(spatial),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AttentionParams {
    pub norm: LayerNorm,
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Linear,
}

impl AttentionParams {
    fn new(store: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) -> Self {
        AttentionParams {
            norm: LayerNorm::new(store, &format!("{name}.norm"), d),
            q: Linear::new(store, &format!("{name}.q"), d, d, rng),
            k: Linear::new(store, &format!("{name}.k"), d, d, rng),
            v: Linear::new(store, &format!("{name}.v"), d, d, rng),
            out: Linear::new(store, &format!("{name}.out"), d, d, rng),
        }
    }

    fn ids(&self) -> Vec<ParamId> {
        let mut ids = alloc::vec![self.norm.gain, self.norm.shift];
        for l in [self.q, self.k, self.v, self.out] {
            ids.extend(l.params());
        }
        ids
    }

    /// Residual pre-norm attention restricted to `groups`.
    fn sublayer(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        groups: &Arc<Vec<Vec<usize>>>,
        heads: usize,
    ) -> Result<Var> {
        let h = self.norm.forward(tape, store, x)?;
        let q = self.q.forward(tape, store, h)?;
        let k = self.k.forward(tape, store, h)?;
        let v = self.v.forward(tape, store, h)?;
        let a = tape.grouped_attention(q, k, v, groups.clone(), heads)?;
        let o = self.out.forward(tape, store, a)?;
        tape.add(x, o)
    }

    /// Attention weight matrices (one per group and head) for tokens `x`.
    fn weights(
        &self,
        store: &ParamStore,
        x: &Tensor,
        groups: &[Vec<usize>],
        heads: usize,
    ) -> Result<Vec<Tensor>> {
        let mut tape = Tape::new();
        let xv = tape.constant(x.clone());
        let h = self.norm.forward(&mut tape, store, xv)?;
        let q = self.q.forward(&mut tape, store, h)?;
        let k = self.k.forward(&mut tape, store, h)?;
        let (q, k) = (tape.value(q), tape.value(k));
        let d = x.shape()[1];
        let dh = d / heads;
        let mut out = Vec::with_capacity(groups.len() * heads);
        for g in groups {
            for hd in 0..heads {
                let pick = |t: &Tensor| {
                    let rows = g.iter().flat_map(|&r| {
                        t.data()[r * d + hd * dh..r * d + (hd + 1) * dh]
                            .iter()
                            .copied()
                    });
                    Tensor::new(&[g.len(), dh], rows.collect())
                };
                let (qg, kg) = (pick(q)?, pick(k)?);
                out.push(attention_weights(&qg, &kg, &kg)?);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BlockParams {
    pub temporal: AttentionParams,
    pub spatial: AttentionParams,
    pub mlp_norm: LayerNorm,
    pub mlp_in: Linear,
    pub mlp_out: Linear,
}

#[derive(Debug, Clone)]
struct Layers {
    embed: Linear,
    cls: ParamId,
    space: ParamId,
    time: ParamId,
    blocks: Vec<BlockParams>,
    head_norm: LayerNorm,
    head_in: Linear,
    head_out: Linear,
}

/// Divided space-time attention encoder with a two-class head.
#[derive(Debug, Clone)]
pub struct TemporalDetector {
    kind: PeaKind,
    config: TemporalDetectorConfig,
    store: ParamStore,
    layers: Layers,
    groups: AttentionGroups,
}

impl TemporalDetector {
    pub fn new(kind: PeaKind, config: TemporalDetectorConfig, seed: u64) -> Result<Self> {
        if !kind.is_temporal() {
            return Err(invalid!("{kind} is not a temporal artifact"));
        }
        config.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let (d, n, t) = (config.dim, config.tokens_per_frame(), config.n_t);
        let p2 = 2 * config.patch_side * config.patch_side;
        let embed = Linear::new(&mut store, "embed", p2, d, &mut rng);
        let cls = store.add_uniform("cls", &[1, d], 0.02, &mut rng);
        let space = store.add_uniform("pos.space", &[n, d], 0.02, &mut rng);
        let time = store.add_uniform("pos.time", &[t, d], 0.02, &mut rng);
        let mut blocks = Vec::with_capacity(config.blocks);
        for l in 0..config.blocks {
            let temporal =
                AttentionParams::new(&mut store, &format!("block{l}.temporal"), d, &mut rng);
            let spatial =
                AttentionParams::new(&mut store, &format!("block{l}.spatial"), d, &mut rng);
            let mlp_norm = LayerNorm::new(&mut store, &format!("block{l}.mlp.norm"), d);
            let mlp_in = Linear::new(
                &mut store,
                &format!("block{l}.mlp.in"),
                d,
                config.mlp_hidden,
                &mut rng,
            );
            let mlp_out = Linear::new(
                &mut store,
                &format!("block{l}.mlp.out"),
                config.mlp_hidden,
                d,
                &mut rng,
            );
            for id in temporal.ids() {
                store.set_lr_scale(id, config.temporal_lr_scale);
            }
            blocks.push(BlockParams {
                temporal,
                spatial,
                mlp_norm,
                mlp_in,
                mlp_out,
            });
        }
        let head_norm = LayerNorm::new(&mut store, "head.norm", d);
        let head_in = Linear::new(&mut store, "head.in", d, d, &mut rng);
        let head_out = Linear::new(&mut store, "head.out", d, 2, &mut rng);
        let layers = Layers {
            embed,
            cls,
            space,
            time,
            blocks,
            head_norm,
            head_in,
            head_out,
        };
        let groups = AttentionGroups::new(t, n);
        Ok(TemporalDetector {
            kind,
            config,
            store,
            layers,
            groups,
        })
    }

    pub fn kind(&self) -> PeaKind {
        self.kind
    }

    pub fn config(&self) -> &TemporalDetectorConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn groups(&self) -> &AttentionGroups {
        &self.groups
    }

    pub fn block(&self, l: usize) -> Option<&BlockParams> {
        self.layers.blocks.get(l)
    }

    /// Token grid `[T·(N+1), D]` of a clip's patch rows.
    pub fn embed_tape(&self, tape: &mut Tape, rows: Var) -> Result<Var> {
        self.layers.embed_tape(tape, &self.store, rows)
    }

    pub fn embed(&self, clip: &Clip) -> Result<Tensor> {
        let rows = patch_rows(&clip.frames, &self.config)?;
        let mut tape = Tape::new();
        let r = tape.constant(rows);
        let e = self.embed_tape(&mut tape, r)?;
        Ok(tape.value(e).clone())
    }

    pub fn temporal_sublayer(&self, tape: &mut Tape, block: usize, x: Var) -> Result<Var> {
        let b = self.block_or_err(block)?;
        b.temporal.sublayer(
            tape,
            &self.store,
            x,
            &self.groups.temporal,
            self.config.heads,
        )
    }

    pub fn spatial_sublayer(&self, tape: &mut Tape, block: usize, x: Var) -> Result<Var> {
        let b = self.block_or_err(block)?;
        b.spatial.sublayer(
            tape,
            &self.store,
            x,
            &self.groups.spatial,
            self.config.heads,
        )
    }

    /// Temporal attention, spatial attention, then the MLP, each residual and pre-normed.
    pub fn divided_block(&self, tape: &mut Tape, block: usize, x: Var) -> Result<Var> {
        let b = *self.block_or_err(block)?;
        self.layers
            .block(tape, &self.store, &b, &self.groups, self.config.heads, x)
    }

    fn block_or_err(&self, block: usize) -> Result<&BlockParams> {
        self.layers
            .blocks
            .get(block)
            .ok_or_else(|| invalid!("block {block} outside 0..{}", self.config.blocks))
    }

    /// Attention weight matrices of one block's temporal (`temporal = true`) or spatial pass.
    pub fn attention_weights(
        &self,
        tokens: &Tensor,
        block: usize,
        temporal: bool,
    ) -> Result<Vec<Tensor>> {
        let b = self.block_or_err(block)?;
        if temporal {
            b.temporal.weights(
                &self.store,
                tokens,
                &self.groups.temporal,
                self.config.heads,
            )
        } else {
            b.spatial
                .weights(&self.store, tokens, &self.groups.spatial, self.config.heads)
        }
    }

    /// Sum over time steps of the encoder's classification-token states, `[D]`.
    pub fn clip_state_tape(&self, tape: &mut Tape, rows: Var) -> Result<Var> {
        self.layers
            .clip_state(tape, &self.store, &self.groups, &self.config, rows)
    }

    /// Two-class probabilities for accumulated state `[D]`.
    pub fn head_tape(&self, tape: &mut Tape, state: Var) -> Result<Var> {
        self.layers.head(tape, &self.store, state)
    }

    /// Head probabilities of a whole video: clip states summed in clip order.
    pub fn video_probabilities(&self, seq: &VideoSequence) -> Result<Tensor> {
        let clips = split_clips(seq, self.config.n_t)?;
        self.clips_probabilities(&clips)
    }

    pub fn clips_probabilities(&self, clips: &[Clip]) -> Result<Tensor> {
        if clips.is_empty() {
            return Err(Error::Empty("clips"));
        }
        let mut tape = Tape::new();
        let mut acc: Option<Var> = None;
        for clip in clips {
            let rows = tape.constant(patch_rows(&clip.frames, &self.config)?);
            let s = self.clip_state_tape(&mut tape, rows)?;
            acc = Some(match acc {
                Some(a) => tape.add(a, s)?,
                None => s,
            });
        }
        let probs = self.head_tape(&mut tape, acc.expect("non-empty"))?;
        Ok(tape.value(probs).clone())
    }

    /// Probability that a single clip shows the artifact.
    pub fn clip_probability(&self, frames: &[Tensor]) -> Result<f64> {
        let probs = self.clips_probabilities(&[Clip {
            frames: frames.to_vec(),
            index: 0,
        }])?;
        Ok(probs.data()[PRESENT])
    }

    pub fn accuracy(&self, clips: &[LabeledClip]) -> Result<f64> {
        if clips.is_empty() {
            return Err(Error::Empty("clips"));
        }
        let mut hits = 0usize;
        for c in clips {
            hits += ((self.clip_probability(&c.frames)? >= 0.5) == c.label) as usize;
        }
        Ok(hits as f64 / clips.len() as f64)
    }
}

impl Layers {
    fn embed_tape(&self, tape: &mut Tape, store: &ParamStore, rows: Var) -> Result<Var> {
        let e = self.embed.forward(tape, store, rows)?;
        let cls = tape.param(store, self.cls);
        let space = tape.param(store, self.space);
        let time = tape.param(store, self.time);
        tape.tokens(e, cls, space, time)
    }

    fn block(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        b: &BlockParams,
        groups: &AttentionGroups,
        heads: usize,
        x: Var,
    ) -> Result<Var> {
        let x = b
            .temporal
            .sublayer(tape, store, x, &groups.temporal, heads)?;
        let x = b.spatial.sublayer(tape, store, x, &groups.spatial, heads)?;
        let h = b.mlp_norm.forward(tape, store, x)?;
        let h = b.mlp_in.forward(tape, store, h)?;
        let h = tape.relu(h);
        let h = b.mlp_out.forward(tape, store, h)?;
        tape.add(x, h)
    }

    fn clip_state(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        groups: &AttentionGroups,
        config: &TemporalDetectorConfig,
        rows: Var,
    ) -> Result<Var> {
        let mut x = self.embed_tape(tape, store, rows)?;
        for b in &self.blocks {
            x = self.block(tape, store, b, groups, config.heads, x)?;
        }
        let cls = tape.select_rows(x, &groups.temporal[0])?;
        tape.sum_rows(cls)
    }

    fn head(&self, tape: &mut Tape, store: &ParamStore, state: Var) -> Result<Var> {
        let h = self.head_norm.forward(tape, store, state)?;
        let h = self.head_in.forward(tape, store, h)?;
        let h = tape.relu(h);
        let logits = self.head_out.forward(tape, store, h)?;
        Ok(tape.softmax(logits))
    }
}

/// Per-video temporal intensity: probability of the "present" class.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TemporalIntensity {
    pub value: f64,
    pub probabilities: [f64; 2],
    pub clips: usize,
}

pub fn temporal_intensity(
    seq: &VideoSequence,
    detector: &TemporalDetector,
) -> Result<TemporalIntensity> {
    let clips = split_clips(seq, detector.config().n_t)?;
    let p = detector.clips_probabilities(&clips)?;
    Ok(TemporalIntensity {
        value: p.data()[PRESENT],
        probabilities: [p.data()[0], p.data()[1]],
        clips: clips.len(),
    })
}

#[derive(Debug, Clone)]
pub struct TrainedTemporal {
    pub detector: TemporalDetector,
    pub epoch_losses: Vec<f64>,
}

/// Seeded cross-entropy training on single-clip examples.
pub fn train_temporal(
    clips: &[LabeledClip],
    kind: PeaKind,
    config: &TemporalDetectorConfig,
    opts: FitOptions,
    seed: u64,
) -> Result<TrainedTemporal> {
    check_two_classes(clips.iter().map(|c| &c.label))?;
    let mut detector =
        TemporalDetector::new(kind, config.clone(), mix(seed, 0x7e + kind.index() as u64))?;
    let prepared = clips
        .iter()
        .map(|c| Ok((patch_rows(&c.frames, config)?, c.label)))
        .collect::<Result<Vec<_>>>()?;
    let TemporalDetector {
        store,
        layers,
        groups,
        config,
        ..
    } = &mut detector;
    let epoch_losses = fit(
        store,
        &prepared,
        opts,
        seed,
        |tape, store, (rows, label)| {
            let r = tape.constant(rows.clone());
            let state = layers.clip_state(tape, store, groups, config, r)?;
            let probs = layers.head(tape, store, state)?;
            let target = tape.index(probs, if *label { PRESENT } else { 1 - PRESENT })?;
            let c = tape.clamp(target, 1e-12, 1.0);
            let lp = tape.log(c);
            Ok(tape.mul_scalar(lp, -1.0))
        },
    )?;
    Ok(TrainedTemporal {
        detector,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::{Frame, Plane};
    use alloc::vec;

    fn seq(n: usize) -> VideoSequence {
        VideoSequence::new(
            (0..n)
                .map(|i| Frame::from_luma(Plane::filled(16, 16, i as u8)))
                .collect(),
            25,
            1,
        )
        .unwrap()
    }

    #[test]
    fn clip_splitting() {
        assert_eq!(split_clips(&seq(16), 8).unwrap().len(), 2);
        let c = split_clips(&seq(17), 8).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c[1].frames[7].data()[0], 15.0 / 255.0);
        assert!(split_clips(&seq(7), 8).is_err());
    }

    #[test]
    fn token_geometry() {
        let cfg = TemporalDetectorConfig::default();
        assert_eq!(cfg.tokens_per_frame(), 16);
        let det = TemporalDetector::new(PeaKind::Flickering, cfg, 1).unwrap();
        let clip = Clip {
            frames: vec![Tensor::full(&[1, 64, 64], 0.5); 8],
            index: 0,
        };
        assert_eq!(det.embed(&clip).unwrap().shape(), &[8 * 17, 32]);
        assert!(
            TemporalDetector::new(PeaKind::Blocking, TemporalDetectorConfig::default(), 1).is_err()
        );
        assert!(TemporalDetectorConfig {
            dim: 30,
            ..Default::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn groups_partition_rows() {
        let g = AttentionGroups::new(3, 2);
        assert_eq!(
            g.temporal.as_slice(),
            &[vec![0, 3, 6], vec![1, 4, 7], vec![2, 5, 8]]
        );
        assert_eq!(
            g.spatial.as_slice(),
            &[vec![0, 1, 2], vec![3, 4, 5], vec![6, 7, 8]]
        );
    }

    #[test]
    fn temporal_parameters_get_scaled_rate() {
        let det =
            TemporalDetector::new(PeaKind::Floating, TemporalDetectorConfig::default(), 1).unwrap();
        let p = det.params();
        assert_eq!(
            p.get(p.find("block0.temporal.q.weight").unwrap()).lr_scale,
            2.0
        );
        assert_eq!(
            p.get(p.find("block1.spatial.q.weight").unwrap()).lr_scale,
            1.0
        );
    }
}
