//! Prompt-aware ranking scheduler toolkit.
//!
//! The crate is split along the serving pipeline:
//!
//! - [`workload`]: prompt datasets, synthetic length distributions and arrival traces.
//! - [`features`]: hashed text features and precomputed embeddings.
//! - [`predictor`]: pair construction, ranking losses, training and linear scorers.
//! - [`scheduler`]: waiting-queue ordering policies and starvation prevention.
//! - [`simulator`]: discrete-event model of continuous and static batching.
//! - [`metrics`]: Kendall tau-b, per-token latency summaries, length variance.
//! - [`cli`]: the experiment harness behind the `pars` binary.

pub mod cli;
pub mod error;
pub mod features;
pub mod metrics;
pub mod predictor;
pub mod scheduler;
pub mod simulator;
pub mod workload;

pub use error::{Error, Result};
