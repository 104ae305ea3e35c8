//! Desk-scale laboratory for staged draft-verify decoding.
//!
//! A chain of next-token models, strongest first, decodes a sequence
//! cooperatively: the lightest model drafts blocks of tokens, each
//! stronger model verifies its lighter neighbour's output with
//! lossless rejection sampling, and verified blocks accumulate until
//! they are worth the next-stronger model's attention. The crate
//! provides the decoding engine over pluggable toy models, exact
//! per-run accounting of forward passes, an analytical planner for
//! chain composition, and acceptance-length statistics with exact
//! oracles and Monte Carlo cross-checks.
//!
//! Modules:
//! - [`model`]: distributions and deterministic toy models (lookup
//!   table, smoothed n-gram, noise-degraded wrapper).
//! - [`verify`]: per-block verification rules, including the lossless
//!   accept/resample rule that preserves the verifier's distribution.
//! - [`engine`]: autoregressive, two-model, and n-model decoding
//!   loops producing [`engine::DecodeTrace`]s, plus a simulated clock.
//! - [`planner`]: the chain time model, drafter-insertion analysis,
//!   and exhaustive chain selection.
//! - [`stats`]: truncated-geometric acceptance-length analytics with
//!   exact pmf oracles and empirical estimators.
//! - [`rng`]: the deterministic counter-based generator every
//!   randomized path draws from.

pub mod cli;
pub mod config;
pub mod engine;
pub mod error;
pub mod model;
pub mod planner;
pub mod report;
pub mod rng;
pub mod stats;
pub mod validate;
pub mod verify;

pub use error::{Error, Result};
