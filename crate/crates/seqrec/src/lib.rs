//! Sequence-aware item recommendation from implicit-feedback transaction logs.
//!
//! A transaction log is split at an analysis date into an observation window
//! (used to build per-user, timestamp-ordered item-token sequences) and a
//! performance window (used to build binary interaction targets). A recurrent
//! network estimates per-item interaction probabilities from each sequence,
//! and recommendations are ranked by uplift against the population base rate.
//! Item-item collaborative filtering, matrix factorization, and n-gram
//! next-token baselines plug into the same offline evaluation harness
//! (MAP@K, NDCG, popularity ablation).
//!
//! Modules follow the pipeline order:
//!
//! - [`ingest`]: loading, temporal/population splits, vocabulary, sequences, targets
//! - [`neural`]: dense matrix kernels with hand-written backward passes
//! - [`model`]: the sequence model (embedding, two LSTM layers, five-layer head)
//! - [`baselines`]: CF, MF, and n-gram comparison systems
//! - [`ranking`]: uplift scores, top-K lists, cold-start fallback
//! - [`metrics`]: NDCG and MAP@K evaluation
//! - [`config`] / [`pipeline`]: experiment configs and the CLI command bodies

pub mod baselines;
pub mod config;
pub mod error;
pub mod hash;
pub mod ingest;
pub mod metrics;
pub mod model;
pub mod neural;
pub mod pipeline;
pub mod ranking;
pub mod synth;

pub use error::{Error, Result};
