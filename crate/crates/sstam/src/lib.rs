//! File formats, model checkpoints, the benchmark harness and the command line for the
//! SSTAM no-reference video quality toolkit. The numerics live in `sstam-core`.

pub mod bench;
pub mod checkpoint;
pub mod error;
pub mod manifest;
pub mod models;
pub mod pgm;
pub mod pipeline;
pub mod report;
pub mod tables;
pub mod y4m;
pub mod yuv;

pub use error::{Error, Result};
