//! Minimal differentiable-programming toolkit: a gradient tape, parameter
//! storage, Adam, and the layer primitives both model stages are built from.

mod layers;
pub mod losses;
mod params;
mod tape;

pub use layers::{apply_bn_batches, average_bn_batches, dropout, BnBatch, BatchNorm, Linear, Pass, RunningStats, BN_EPS, BN_MOMENTUM};
pub use params::{Adam, ParamId, ParamStore};
pub use tape::{Gradients, HeadCombine, Tape, Var};
