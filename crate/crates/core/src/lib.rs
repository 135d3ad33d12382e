//! Adaptive sparse backpropagation for small dense networks.
//!
//! The crate trains multilayer perceptrons one sample at a time with plain
//! SGD, and lets a [`selector::SparsityConfig`] decide how much of each
//! layer's error signal is propagated backwards:
//!
//! - `full`: ordinary backpropagation.
//! - `fixed_topk`: a constant fraction of the largest error components per layer.
//! - `tinyprop`: a per-layer fraction that adapts to the layer's total error
//!   relative to its running maximum, damped geometrically towards the input.
//! - `tinypropv2`: the adaptive scheme plus a per-sample decision that skips
//!   the backward pass entirely for samples the network already handles well.
//!
//! Every multiply-accumulate spent in the forward pass, the backward pass and
//! the weight update is counted exactly in an [`effort::EffortLedger`], so
//! effort comparisons between strategies are measured rather than estimated.
//!
//! ```
//! use sparseprop::data::synth_blobs;
//! use sparseprop::numerics::Prng;
//! use sparseprop::selector::SparsityConfig;
//! use sparseprop::trainer::{train, TrainConfig};
//!
//! let data = synth_blobs(200, 2, 4, &mut Prng::new(7)).unwrap();
//! let (train_set, test_set) = data.split_shuffle(0.25, &mut Prng::new(8)).unwrap();
//! let cfg = TrainConfig::with_default_architecture(&train_set, SparsityConfig::tinyprop())
//!     .epochs(3)
//!     .warmup_epochs(1);
//! let outcome = train(&train_set, &test_set, &cfg).unwrap();
//! assert!(outcome.records.last().unwrap().test_accuracy > 0.9);
//! ```

pub mod data;
pub mod effort;
mod error;
pub mod network;
pub mod numerics;
pub mod par;
pub mod selector;
pub mod trainer;

pub use error::{Error, Result};
