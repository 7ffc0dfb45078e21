//! Community detection in multilayer networks by layered division and
//! global allocation.
//!
//! Every layer of a multilayer graph gets its own sparse attention head over
//! its observed edges. A shared scorer maps the per-layer outputs to soft
//! community assignments, and each node is finally allocated to the single
//! most confident community over all layers. Training maximizes a
//! differentiable multilayer modularity with a normalized balance penalty.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, loaders and the
//! experiment harness live in the `ldga` crate.

#![no_std]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod embed;
mod error;
pub mod graph;
pub mod linalg;
pub mod metrics;
pub mod model;
pub mod objective;
pub mod optim;
pub mod rng;
pub mod synth;
pub mod train;

pub use error::{Error, Result};
pub use graph::{LayerTopology, MultilayerGraph, WeightedGraph};
pub use linalg::Matrix;
pub use model::{ConsensusPartition, FeatureTensor, ModelConfig, ModelParameters, SoftAssignments};
pub use objective::{LossBreakdown, LossConfig, LossMode};
pub use train::{train, TrainConfig, TrainOutcome};
