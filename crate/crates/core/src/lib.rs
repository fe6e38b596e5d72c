//! Deterministic simulator for decentralized federated learning with
//! evidential trust-aware personalization.
//!
//! Nodes train small Dirichlet-output classifiers on non-IID partitions of a
//! shared dataset and exchange parameters along an undirected peer graph.
//! Each node scores its neighbors by running their models on a fixed local
//! validation subset: low epistemic uncertainty (vacuity) plus good accuracy
//! earns trust, an adaptive threshold filters incompatible peers, and the
//! surviving models are blended with a configurable self-weight. Everything
//! is seeded through a single master seed, so equal configs reproduce
//! byte-identical results, including under parallel execution.

pub mod aggregation;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod evidential;
pub mod orchestrator;
pub mod special;
pub mod topology;

pub use error::{Error, Result};
