//! Markov-random-field machinery for resource-constrained architecture
//! search.
//!
//! Architectures are encoded as one discrete choice per layer. Performance
//! and resource models are pairwise MRFs over those choices; search is MAP
//! inference on their Lagrangian combination, with diverse M-best inference
//! returning several strong candidates per run.
//!
//! Module map:
//! - [`graph`], [`enumerate`]: the factor-graph model and brute-force oracles
//! - [`exact`], [`mplp`]: exact clique-tree MAP and the MPLP dual solver
//! - [`diverse`]: Hamming-penalized diverse M-best inference
//! - [`resource`]: pairwise FLOPs and fitted latency models
//! - [`learn`]: Gibbs sampling and factor learning from a loss oracle
//! - [`arch`]: encoder-decoder search-space templates
//! - [`search`]: Lagrangian binary search and the end-to-end pipeline
//! - [`format`]: text file formats

pub mod arch;
pub mod diverse;
pub mod enumerate;
pub mod error;
pub mod exact;
pub mod exec;
pub mod format;
pub mod graph;
pub mod learn;
pub mod mplp;
pub mod oracle;
pub mod resource;
pub mod search;
pub mod solver;
pub(crate) mod util;

pub use error::{Error, Result};
pub use exec::Parallelism;
pub use graph::{combine_lagrangian, Assignment, FactorGraph, GraphBuilder, LabelSet, PairTable, ScoredAssignment};
