//! Echo-chamber analysis and counterfactual recommendation.
//!
//! The crate is organised around the feedback loop of a recommender system:
//!
//! - [`markov`] builds and analyses the Markov chains over historical group
//!   sequences, exactly for small state spaces and by Monte-Carlo otherwise.
//! - [`cf`] is the base collaborative-filtering scorer: user and item
//!   embeddings with a mean-of-liked-history encoder.
//! - [`causal`] wraps any [`cf::Scorer`] with back-door adjustment over a
//!   factual history and a set of counterfactual histories.
//! - [`eval`] holds the measurement protocols (content diversity, ranking
//!   metrics, MMR re-ranking, exit-mechanism satisfaction simulation).
//! - [`data`] ingests rating logs and produces phase and leave-one-out splits.
//! - [`experiment`] drives the whole protocol end to end.
//!
//! Data-parallel loops go through [`exec`], which uses rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod causal;
pub mod cf;
pub mod data;
mod error;
pub mod eval;
pub mod exec;
pub mod experiment;
pub mod markov;

pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;

/// Version string written into every report and checkpoint.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Schema version of the JSON reports produced by this crate.
pub const REPORT_SCHEMA_VERSION: u32 = 1;
