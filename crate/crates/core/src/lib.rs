//! Numeric core of the SSTAM no-reference video quality toolkit.
//!
//! Everything here is allocation-only (`no_std` + `alloc`): planar video
//! containers, a small reverse-mode differentiation tape, the saliency,
//! spatial-artifact and temporal-artifact networks, artifact synthesis, the
//! bagged SVR quality predictor and the correlation metrics used to score it.
//! File formats, checkpoints and the command line live in the `sstam` crate.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod error;
pub mod gradcheck;
mod kernels;
pub mod layers;
pub mod metrics;
pub mod optim;
pub mod param;
pub mod quality;
pub mod rng;
pub mod saliency;
pub mod spatial;
pub mod synth;
pub mod tape;
pub mod temporal;
pub mod tensor;
pub mod video;

pub use error::{Error, Result};
pub use param::{ParamId, ParamStore};
pub use tape::{Grads, Tape, Var};
pub use tensor::Tensor;
