//! Simulation library for reliable coded distributed computing.
//!
//! A service provider publishes a matrix-vector rendering task; candidate
//! workers are screened through a subjective-logic reputation model, miners
//! form coalitions over the screened workers, the provider and the selected
//! workers play a one-leader/multi-follower incentive game, and the task
//! itself runs as an (n, k) erasure-coded computation whose result is
//! reconstructed from the fastest k workers. Two append-only hash-chained
//! ledgers (a reputation chain and a resource chain) record every reputation
//! update and resource interaction.
//!
//! The crate is organized around five subsystems plus a scenario runner:
//!
//! - [`reputation`]: belief/disbelief/uncertainty opinions and their fusion.
//! - [`coalition`]: merge-and-split coalition formation among miners.
//! - [`stackelberg`]: latency/computation models, follower best response,
//!   and the leader's reward optimization.
//! - [`cdc`]: coded matrix-vector execution with sampled straggler latencies.
//! - [`ledger`]: the chained ledger pair, cross-chain queries, and
//!   throughput instrumentation.
//! - [`experiments`]: deterministic, seedable scenarios that wire the
//!   subsystems together and emit CSV tables.
//!
//! All randomness flows from explicit seeds; a scenario run twice with the
//! same seed produces byte-identical CSV output.

pub mod cdc;
pub mod coalition;
pub mod experiments;
pub mod ledger;
pub mod reputation;
pub mod stackelberg;

pub use reputation::{InteractionCounts, Opinion, ReputationParams, TaskOutcome};
