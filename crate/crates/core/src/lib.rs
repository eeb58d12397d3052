//! Open-set recognition lab.
//!
//! The crate implements the full pipeline for turning a closed-set
//! classifier into an open-set recognizer:
//!
//! 1. train a backbone network on the known-known (KK) classes ([`nn`]),
//! 2. score an auxiliary dataset with it and mine the items that fool it
//!    with high probability into a "known unknown trainer" (KUT) set
//!    ([`mining`]),
//! 3. train a small confidence subnetwork on intermediate (FC1) features
//!    of KK vs KUT items and bolt it onto the backbone ([`osrnet`]),
//! 4. gate predictions through a confidence cut-off and measure the result
//!    with AUROC / accuracy / entropy / MMD diagnostics ([`eval`]).
//!
//! Everything is 64-bit and bit-deterministic: the same seeds and data
//! order produce identical parameters, checkpoints and metrics. Batch
//! evaluation and kernel sums can run on multiple cores (crate feature
//! `parallel`, on by default) and still reduce in fixed index order, so
//! results are identical regardless of worker count.

pub mod checkpoint;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod exec;
pub mod mining;
pub mod nn;
pub mod osrnet;
pub mod seed;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
