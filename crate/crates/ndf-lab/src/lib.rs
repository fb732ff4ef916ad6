//! A training-data-selection laboratory.
//!
//! The crate trains a small feed-forward classifier with mini-batch
//! momentum-SGD while a *filtration strategy* decides, instance by instance,
//! which arriving data is actually used for updates. Four strategies share
//! one contract:
//!
//! - `unfiltered`: keep everything;
//! - `spl`: self-paced filtering of the K largest-loss instances per batch,
//!   K shrinking linearly to zero over a fixed number of epochs;
//! - `ndf`: a 25x12x1 sigmoid policy network trained with REINFORCE against
//!   a terminal reward derived from how quickly held-out accuracy crosses a
//!   threshold;
//! - `randdrop`: replays the per-epoch filter ratios logged by an `ndf` run
//!   with uniform random filtering.
//!
//! Kept instances flow through an accumulation buffer so every model update
//! consumes exactly `M` instances regardless of strategy, which makes
//! "effective training instances" comparable across runs. The [`harness`]
//! module drives full experiments (policy training episodes, strategy
//! application, multi-run averaging) and writes CSV logs; the `ndf-lab`
//! binary exposes it all as a CLI.
//!
//! Everything is deterministic given the seeds in [`harness::RunConfig`]:
//! repeated runs produce byte-identical outputs.

pub mod config;
pub mod csvio;
pub mod data;
pub mod error;
pub mod features;
pub mod harness;
pub mod matrix;
pub mod nn;
pub mod optim;
pub mod policy;
pub mod report;
pub mod rng;
pub mod strategies;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
